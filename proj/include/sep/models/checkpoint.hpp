#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sep/models/fd_model.hpp"
#include "sep/models/td_model.hpp"

namespace sep {

inline constexpr int kCheckpointFormatVersion = 1;

namespace detail {

inline void put_f32_le(std::string& out, float v) {
  const auto u = std::bit_cast<std::uint32_t>(v);
  out.push_back(static_cast<char>(u & 0xffu));
  out.push_back(static_cast<char>((u >> 8) & 0xffu));
  out.push_back(static_cast<char>((u >> 16) & 0xffu));
  out.push_back(static_cast<char>((u >> 24) & 0xffu));
}

inline float get_f32_le(const unsigned char* p) {
  const std::uint32_t u = std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
                          (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
  return std::bit_cast<float>(u);
}

inline void require_keys(const nlohmann::json& j,
                         std::initializer_list<const char*> keys,
                         const std::string& what) {
  if (!j.is_object()) throw ShapeError(what + ": expected an object");
  std::set<std::string> expect;
  for (const char* k : keys) expect.insert(k);
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!expect.count(it.key()))
      throw ShapeError(what + ": unknown key '" + it.key() + "'");
  for (const auto& k : expect)
    if (!j.contains(k)) throw ShapeError(what + ": missing key '" + k + "'");
}

}  // namespace detail

inline nlohmann::json config_json(const FdModelConfig& c, const StftConfig& s) {
  return {{"kind", "fd"},           {"n_layers", c.n_layers},
          {"hidden", c.hidden},     {"n_bins", c.n_bins},
          {"n_speakers", c.n_speakers}, {"scheme", to_string(c.scheme)},
          {"sample_rate_hz", s.sample_rate_hz}, {"win_ms", s.win_ms},
          {"hop_ms", s.hop_ms}};
}

inline nlohmann::json config_json(const TdModelConfig& c) {
  return {{"kind", "td"},           {"n_blocks", c.n_blocks},
          {"hidden", c.hidden},     {"n_kernels", c.n_kernels},
          {"kernel_len", c.kernel_len}, {"chunk", c.chunk},
          {"n_speakers", c.n_speakers}, {"scheme", to_string(c.scheme)}};
}

inline FdModelConfig fd_config_from_json(const nlohmann::json& j, StftConfig& stft) {
  detail::require_keys(j,
                       {"kind", "n_layers", "hidden", "n_bins", "n_speakers",
                        "scheme", "sample_rate_hz", "win_ms", "hop_ms"},
                       "checkpoint model config");
  try {
    FdModelConfig c;
    c.n_layers = j.at("n_layers").get<Index>();
    c.hidden = j.at("hidden").get<Index>();
    c.n_bins = j.at("n_bins").get<Index>();
    c.n_speakers = j.at("n_speakers").get<Index>();
    c.scheme = parse_scheme(j.at("scheme").get<std::string>());
    stft.sample_rate_hz = j.at("sample_rate_hz").get<double>();
    stft.win_ms = j.at("win_ms").get<double>();
    stft.hop_ms = j.at("hop_ms").get<double>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ShapeError("checkpoint model config: " + std::string(e.what()));
  }
}

inline TdModelConfig td_config_from_json(const nlohmann::json& j) {
  detail::require_keys(j,
                       {"kind", "n_blocks", "hidden", "n_kernels", "kernel_len",
                        "chunk", "n_speakers", "scheme"},
                       "checkpoint model config");
  try {
    TdModelConfig c;
    c.n_blocks = j.at("n_blocks").get<Index>();
    c.hidden = j.at("hidden").get<Index>();
    c.n_kernels = j.at("n_kernels").get<Index>();
    c.kernel_len = j.at("kernel_len").get<Index>();
    c.chunk = j.at("chunk").get<Index>();
    c.n_speakers = j.at("n_speakers").get<Index>();
    c.scheme = parse_scheme(j.at("scheme").get<std::string>());
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ShapeError("checkpoint model config: " + std::string(e.what()));
  }
}

/// Writes `manifest.json` plus `weights.bin` (little-endian 32-bit floats,
/// packed back to back in manifest order) into `dir`. The weights land on
/// disk before the manifest so an interrupted save never looks loadable.
template <typename S>
void write_checkpoint(const std::filesystem::path& dir, const nlohmann::json& model_cfg,
                      std::vector<NamedParam<S>> params,
                      nlohmann::json metadata = nlohmann::json::object()) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec)
    throw ShapeError("checkpoint: cannot create '" + dir.string() + "': " + ec.message());

  std::string blob;
  nlohmann::json manifest;
  manifest["format_version"] = kCheckpointFormatVersion;
  manifest["model"] = model_cfg;
  manifest["metadata"] = std::move(metadata);
  nlohmann::json plist = nlohmann::json::array();
  for (auto& p : params) {
    plist.push_back({{"name", p.name}, {"shape", p.tensor.shape()}, {"offset", blob.size()}});
    for (S v : p.tensor.values()) detail::put_f32_le(blob, static_cast<float>(v));
  }
  manifest["params"] = std::move(plist);
  manifest["payload_bytes"] = blob.size();

  {
    std::ofstream f(dir / "weights.bin", std::ios::binary | std::ios::trunc);
    if (!f) throw ShapeError("checkpoint: cannot write '" + (dir / "weights.bin").string() + "'");
    f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!f) throw ShapeError("checkpoint: short write to '" + (dir / "weights.bin").string() + "'");
  }
  std::ofstream f(dir / "manifest.json", std::ios::trunc);
  if (!f) throw ShapeError("checkpoint: cannot write '" + (dir / "manifest.json").string() + "'");
  f << manifest.dump(2) << "\n";
  if (!f) throw ShapeError("checkpoint: short write to '" + (dir / "manifest.json").string() + "'");
}

template <typename S>
void save_checkpoint(const std::filesystem::path& dir, FdModel<S>& m,
                     nlohmann::json metadata = nlohmann::json::object()) {
  write_checkpoint(dir, config_json(m.cfg, m.stft), m.named_parameters(), std::move(metadata));
}

template <typename S>
void save_checkpoint(const std::filesystem::path& dir, TdModel<S>& m,
                     nlohmann::json metadata = nlohmann::json::object()) {
  write_checkpoint(dir, config_json(m.cfg), m.named_parameters(), std::move(metadata));
}

/// A parsed checkpoint: the manifest plus every weight blob, keyed by name.
struct LoadedCheckpoint {
  nlohmann::json manifest;
  std::map<std::string, std::pair<Shape, std::vector<float>>> params;

  std::string kind() const {
    try {
      return manifest.at("model").at("kind").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ShapeError("checkpoint: missing model kind: " + std::string(e.what()));
    }
  }
};

inline LoadedCheckpoint read_checkpoint(const std::filesystem::path& dir) {
  const auto mpath = dir / "manifest.json";
  const auto wpath = dir / "weights.bin";
  std::ifstream mf(mpath);
  if (!mf) throw ShapeError("checkpoint: cannot open '" + mpath.string() + "'");

  LoadedCheckpoint ck;
  try {
    ck.manifest = nlohmann::json::parse(mf);
  } catch (const nlohmann::json::exception& e) {
    throw ShapeError("checkpoint: malformed manifest: " + std::string(e.what()));
  }
  detail::require_keys(ck.manifest,
                       {"format_version", "model", "metadata", "params", "payload_bytes"},
                       "checkpoint manifest");

  std::vector<unsigned char> blob;
  {
    std::ifstream wf(wpath, std::ios::binary);
    if (!wf) throw ShapeError("checkpoint: cannot open '" + wpath.string() + "'");
    blob.assign(std::istreambuf_iterator<char>(wf), std::istreambuf_iterator<char>());
  }

  try {
    if (ck.manifest.at("format_version").get<int>() != kCheckpointFormatVersion)
      throw ShapeError("checkpoint: unsupported format version");
    const auto payload = ck.manifest.at("payload_bytes").get<std::uint64_t>();
    if (blob.size() != payload)
      throw ShapeError("checkpoint: weights.bin holds " + std::to_string(blob.size()) +
                       " bytes, manifest expects " + std::to_string(payload));

    // Entries must tile the payload exactly: offsets in order, no gaps, no
    // overlap, nothing left over.
    std::uint64_t cursor = 0;
    for (const auto& e : ck.manifest.at("params")) {
      detail::require_keys(e, {"name", "shape", "offset"}, "checkpoint param entry");
      const auto name = e.at("name").get<std::string>();
      const auto shape = e.at("shape").get<Shape>();
      const auto offset = e.at("offset").get<std::uint64_t>();
      for (Index d : shape)
        if (d <= 0) throw ShapeError("checkpoint: parameter '" + name + "' has a bad shape");
      if (ck.params.count(name))
        throw ShapeError("checkpoint: duplicate parameter '" + name + "'");
      if (offset != cursor)
        throw ShapeError("checkpoint: parameter '" + name + "' at offset " +
                         std::to_string(offset) + ", expected " + std::to_string(cursor));
      const auto bytes = static_cast<std::uint64_t>(shape_size(shape)) * 4;
      if (offset + bytes > blob.size())
        throw ShapeError("checkpoint: truncated payload at parameter '" + name + "'");
      std::vector<float> vals(static_cast<std::size_t>(shape_size(shape)));
      for (std::size_t i = 0; i < vals.size(); ++i)
        vals[i] = detail::get_f32_le(blob.data() + offset + 4 * i);
      ck.params.emplace(name, std::make_pair(shape, std::move(vals)));
      cursor = offset + bytes;
    }
    if (cursor != blob.size())
      throw ShapeError("checkpoint: " + std::to_string(blob.size() - cursor) +
                       " trailing bytes not covered by the manifest");
  } catch (const nlohmann::json::exception& e) {
    throw ShapeError("checkpoint: malformed manifest: " + std::string(e.what()));
  }
  return ck;
}

/// Strict assignment: checkpoint and model must carry exactly the same
/// parameter names with equal shapes. Validates everything before touching
/// the model, so a failure never leaves a half-loaded instance.
template <typename S>
void assign_parameters(std::vector<NamedParam<S>> params, const LoadedCheckpoint& ck) {
  std::set<std::string> used;
  for (const auto& p : params) {
    const auto it = ck.params.find(p.name);
    if (it == ck.params.end())
      throw ShapeError("checkpoint: missing parameter '" + p.name + "'");
    if (it->second.first != p.tensor.shape())
      throw ShapeError("checkpoint: parameter '" + p.name + "' has shape " +
                       shape_str(it->second.first) + ", model expects " +
                       shape_str(p.tensor.shape()));
    used.insert(p.name);
  }
  for (const auto& [name, entry] : ck.params)
    if (!used.count(name))
      throw ShapeError("checkpoint: parameter '" + name + "' has no destination in the model");
  for (auto& p : params) {
    const auto& src = ck.params.at(p.name).second;
    auto dst = p.tensor.values_mut();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<S>(src[i]);
  }
}

template <typename S>
FdModel<S> load_fd_model(const LoadedCheckpoint& ck) {
  if (ck.kind() != "fd")
    throw ShapeError("checkpoint: expected a frequency-domain model, found kind '" +
                     ck.kind() + "'");
  StftConfig stft;
  const FdModelConfig cfg = fd_config_from_json(ck.manifest.at("model"), stft);
  Rng rng(0);
  FdModel<S> m = FdModel<S>::init(cfg, stft, rng);
  assign_parameters(m.named_parameters(), ck);
  return m;
}

template <typename S>
TdModel<S> load_td_model(const LoadedCheckpoint& ck) {
  if (ck.kind() != "td")
    throw ShapeError("checkpoint: expected a time-domain model, found kind '" +
                     ck.kind() + "'");
  const TdModelConfig cfg = td_config_from_json(ck.manifest.at("model"));
  Rng rng(0);
  TdModel<S> m = TdModel<S>::init(cfg, rng);
  assign_parameters(m.named_parameters(), ck);
  return m;
}

template <typename S>
FdModel<S> load_fd_model(const std::filesystem::path& dir) {
  return load_fd_model<S>(read_checkpoint(dir));
}

template <typename S>
TdModel<S> load_td_model(const std::filesystem::path& dir) {
  return load_td_model<S>(read_checkpoint(dir));
}

namespace detail {

/// Pretrained-weight transfer for the dual-mode schemes. Every parameter the
/// target shares by name with the checkpoint is copied; fc_online weights are
/// the only ones allowed to exist on one side alone, since only the
/// decomposed scheme owns them and they are freshly initialized. Copying
/// everything else, the two RNNs included, keeps the target's offline path
/// bit-identical to the pretrained model.
template <typename S>
void copy_pretrained(std::vector<NamedParam<S>> params, const LoadedCheckpoint& ck) {
  const auto is_online_fc = [](const std::string& name) {
    return name.find(".fc_online.") != std::string::npos;
  };
  std::set<std::string> used;
  for (const auto& p : params) {
    const auto it = ck.params.find(p.name);
    if (it == ck.params.end()) {
      if (!is_online_fc(p.name))
        throw ShapeError("init_from_offline: pretrained checkpoint lacks '" + p.name + "'");
      continue;
    }
    if (it->second.first != p.tensor.shape())
      throw ShapeError("init_from_offline: parameter '" + p.name + "' has shape " +
                       shape_str(it->second.first) + ", target expects " +
                       shape_str(p.tensor.shape()));
    used.insert(p.name);
  }
  for (const auto& [name, entry] : ck.params)
    if (!used.count(name) && !is_online_fc(name))
      throw ShapeError("init_from_offline: checkpoint parameter '" + name +
                       "' has no destination in the target");
  for (auto& p : params) {
    const auto it = ck.params.find(p.name);
    if (it == ck.params.end()) continue;
    const auto& src = it->second.second;
    auto dst = p.tensor.values_mut();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<S>(src[i]);
  }
}

}  // namespace detail

/// Builds a model of the requested scheme from a pretrained (typically
/// offline/standard) checkpoint of the same dimensions.
template <typename S>
FdModel<S> init_fd_from_offline(const LoadedCheckpoint& ck, Scheme target_scheme, Rng& rng) {
  if (ck.kind() != "fd")
    throw ShapeError("init_from_offline: expected a frequency-domain checkpoint");
  StftConfig stft;
  FdModelConfig cfg = fd_config_from_json(ck.manifest.at("model"), stft);
  cfg.scheme = target_scheme;
  FdModel<S> m = FdModel<S>::init(cfg, stft, rng);
  detail::copy_pretrained(m.named_parameters(), ck);
  return m;
}

template <typename S>
TdModel<S> init_td_from_offline(const LoadedCheckpoint& ck, Scheme target_scheme, Rng& rng) {
  if (ck.kind() != "td")
    throw ShapeError("init_from_offline: expected a time-domain checkpoint");
  TdModelConfig cfg = td_config_from_json(ck.manifest.at("model"));
  cfg.scheme = target_scheme;
  TdModel<S> m = TdModel<S>::init(cfg, rng);
  detail::copy_pretrained(m.named_parameters(), ck);
  return m;
}

}  // namespace sep
