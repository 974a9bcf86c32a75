#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "sep/numcore/tensor.hpp"

namespace sep {

enum class WavEncoding { Pcm16, Float32 };

struct WavData {
  std::vector<float> samples;  // mono
  std::uint32_t sample_rate_hz = 0;
  WavEncoding encoding = WavEncoding::Float32;
};

namespace detail {

inline void put_u16(std::string& b, std::uint16_t v) {
  b.push_back(static_cast<char>(v & 0xff));
  b.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32(std::string& b, std::uint32_t v) {
  put_u16(b, static_cast<std::uint16_t>(v & 0xffff));
  put_u16(b, static_cast<std::uint16_t>(v >> 16));
}

inline std::uint16_t get_u16(const std::string& b, std::size_t& pos) {
  if (pos + 2 > b.size()) throw ShapeError("wav: truncated file");
  const auto lo = static_cast<std::uint8_t>(b[pos]);
  const auto hi = static_cast<std::uint8_t>(b[pos + 1]);
  pos += 2;
  return static_cast<std::uint16_t>(lo | (hi << 8));
}

inline std::uint32_t get_u32(const std::string& b, std::size_t& pos) {
  const std::uint32_t lo = get_u16(b, pos);
  const std::uint32_t hi = get_u16(b, pos);
  return lo | (hi << 16);
}

inline std::string get_tag(const std::string& b, std::size_t& pos) {
  if (pos + 4 > b.size()) throw ShapeError("wav: truncated file");
  std::string t = b.substr(pos, 4);
  pos += 4;
  return t;
}

}  // namespace detail

/// Writes a mono RIFF/WAVE file. Float-32 stores the samples verbatim;
/// PCM-16 quantizes with a 32768 full scale, so the round-trip error is
/// at most one quantization step.
inline void wav_write(const std::string& path, std::span<const float> samples,
                      std::uint32_t sample_rate_hz,
                      WavEncoding enc = WavEncoding::Float32) {
  const bool f32 = enc == WavEncoding::Float32;
  const std::uint16_t bytes_per = f32 ? 4 : 2;
  const auto data_size = static_cast<std::uint32_t>(samples.size() * bytes_per);

  std::string b;
  b.reserve(64 + data_size);
  b += "RIFF";
  const std::uint32_t fact_size = f32 ? 12 : 0;  // non-PCM wants a fact chunk
  detail::put_u32(b, 4 + 24 + fact_size + 8 + data_size);
  b += "WAVE";
  b += "fmt ";
  detail::put_u32(b, 16);
  detail::put_u16(b, f32 ? 3 : 1);  // IEEE float | PCM
  detail::put_u16(b, 1);            // mono
  detail::put_u32(b, sample_rate_hz);
  detail::put_u32(b, sample_rate_hz * bytes_per);
  detail::put_u16(b, bytes_per);
  detail::put_u16(b, static_cast<std::uint16_t>(bytes_per * 8));
  if (f32) {
    b += "fact";
    detail::put_u32(b, 4);
    detail::put_u32(b, static_cast<std::uint32_t>(samples.size()));
  }
  b += "data";
  detail::put_u32(b, data_size);
  for (float s : samples) {
    if (f32) {
      detail::put_u32(b, std::bit_cast<std::uint32_t>(s));
    } else {
      const double q = std::round(static_cast<double>(s) * 32768.0);
      const auto v = static_cast<std::int16_t>(std::clamp(q, -32768.0, 32767.0));
      detail::put_u16(b, static_cast<std::uint16_t>(v));
    }
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ShapeError("wav: cannot open '" + path + "' for writing");
  f.write(b.data(), static_cast<std::streamsize>(b.size()));
  if (!f) throw ShapeError("wav: short write to '" + path + "'");
}

/// Reads a mono PCM-16 or IEEE-float-32 WAV. Unknown chunks are skipped;
/// anything else (multichannel, other encodings, truncation) is an error.
inline WavData wav_read(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ShapeError("wav: cannot open '" + path + "'");
  std::string b((std::istreambuf_iterator<char>(f)),
                std::istreambuf_iterator<char>());

  std::size_t pos = 0;
  if (detail::get_tag(b, pos) != "RIFF") throw ShapeError("wav: not a RIFF file");
  detail::get_u32(b, pos);  // declared size; trust the actual chunk sizes
  if (detail::get_tag(b, pos) != "WAVE") throw ShapeError("wav: not a WAVE file");

  WavData out;
  bool have_fmt = false;
  std::uint16_t fmt_tag = 0, bits = 0;
  while (pos < b.size()) {
    const std::string tag = detail::get_tag(b, pos);
    const std::uint32_t size = detail::get_u32(b, pos);
    if (pos + size > b.size()) throw ShapeError("wav: truncated chunk '" + tag + "'");
    if (tag == "fmt ") {
      std::size_t p = pos;
      fmt_tag = detail::get_u16(b, p);
      const std::uint16_t channels = detail::get_u16(b, p);
      out.sample_rate_hz = detail::get_u32(b, p);
      detail::get_u32(b, p);  // byte rate
      detail::get_u16(b, p);  // block align
      bits = detail::get_u16(b, p);
      if (channels != 1)
        throw ShapeError("wav: " + std::to_string(channels) +
                         " channels; only mono is supported");
      if (fmt_tag == 1 && bits == 16) {
        out.encoding = WavEncoding::Pcm16;
      } else if (fmt_tag == 3 && bits == 32) {
        out.encoding = WavEncoding::Float32;
      } else {
        throw ShapeError("wav: unsupported encoding (format " +
                         std::to_string(fmt_tag) + ", " + std::to_string(bits) +
                         " bits)");
      }
      have_fmt = true;
    } else if (tag == "data") {
      if (!have_fmt) throw ShapeError("wav: data chunk before fmt chunk");
      const std::uint32_t bytes_per = out.encoding == WavEncoding::Float32 ? 4 : 2;
      if (size % bytes_per != 0) throw ShapeError("wav: ragged data chunk");
      std::size_t p = pos;
      out.samples.reserve(size / bytes_per);
      for (std::uint32_t i = 0; i < size / bytes_per; ++i) {
        if (out.encoding == WavEncoding::Float32) {
          out.samples.push_back(std::bit_cast<float>(detail::get_u32(b, p)));
        } else {
          const auto v = static_cast<std::int16_t>(detail::get_u16(b, p));
          out.samples.push_back(static_cast<float>(v) / 32768.0f);
        }
      }
      return out;
    }
    pos += size + (size % 2);  // RIFF chunks are word-aligned
  }
  throw ShapeError("wav: no data chunk in '" + path + "'");
}

}  // namespace sep
