#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sep/models/fd_model.hpp"
#include "sep/models/td_model.hpp"
#include "sep/numcore/rng.hpp"
#include "sep/training/loss.hpp"
#include "sep/training/optimizer.hpp"

namespace sep {

enum class Strategy {
  FromScratchOnline,
  FromScratchOffline,
  InitFromOffline,
  Multitask,
  InitPlusMultitask,
};

inline const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::FromScratchOnline: return "from-scratch-online";
    case Strategy::FromScratchOffline: return "from-scratch-offline";
    case Strategy::InitFromOffline: return "init-from-offline";
    case Strategy::Multitask: return "multitask";
    default: return "init-plus-multitask";
  }
}

inline Strategy parse_strategy(const std::string& s) {
  if (s == "from-scratch-online") return Strategy::FromScratchOnline;
  if (s == "from-scratch-offline") return Strategy::FromScratchOffline;
  if (s == "init-from-offline") return Strategy::InitFromOffline;
  if (s == "multitask") return Strategy::Multitask;
  if (s == "init-plus-multitask") return Strategy::InitPlusMultitask;
  throw ShapeError("unknown strategy '" + s + "'");
}

inline bool is_multitask(Strategy s) {
  return s == Strategy::Multitask || s == Strategy::InitPlusMultitask;
}

/// The path a single-objective strategy optimizes (and the path evaluated
/// for validation under every strategy except pure offline training).
inline Path primary_path(Strategy s) {
  return s == Strategy::FromScratchOffline ? Path::Offline : Path::Online;
}

struct TrainConfig {
  double lr0 = 0.001;
  double lr_decay = 0.5;
  Index decay_patience_epochs = 3;
  Index early_stop_patience = 15;
  double clip_norm = 5.0;
  Index batch_size = 2;
  Index max_epochs = 50;
  std::uint64_t seed = 0;
  Strategy strategy = Strategy::FromScratchOffline;
  double w_offline = 1.0;
  double w_online = 1.0;

  void validate() const {
    if (!(lr0 > 0.0)) throw ShapeError("TrainConfig: lr0 must be positive");
    if (!(lr_decay > 0.0 && lr_decay < 1.0))
      throw ShapeError("TrainConfig: lr_decay must be in (0, 1)");
    if (decay_patience_epochs < 1 || early_stop_patience < 1)
      throw ShapeError("TrainConfig: patience values must be >= 1");
    if (!(clip_norm > 0.0)) throw ShapeError("TrainConfig: clip_norm must be positive");
    if (batch_size < 1) throw ShapeError("TrainConfig: batch_size must be >= 1");
    if (max_epochs < 1) throw ShapeError("TrainConfig: max_epochs must be >= 1");
    if (w_offline < 0.0 || w_online < 0.0)
      throw ShapeError("TrainConfig: multitask weights must be non-negative");
  }
};

/// Plateau bookkeeping: halve the learning rate after `decay_patience`
/// consecutive epochs without a new best training loss, stop after
/// `stop_patience` consecutive epochs without a new best validation loss.
struct TrainSchedule {
  double lr;
  double lr_decay;
  Index decay_patience;
  Index stop_patience;

  double best_train = std::numeric_limits<double>::infinity();
  double best_val = std::numeric_limits<double>::infinity();
  Index stale_train = 0;
  Index stale_val = 0;
  bool should_stop = false;

  TrainSchedule(const TrainConfig& cfg)
      : lr(cfg.lr0), lr_decay(cfg.lr_decay),
        decay_patience(cfg.decay_patience_epochs),
        stop_patience(cfg.early_stop_patience) {}

  void observe_train(double loss) {
    if (loss < best_train) {
      best_train = loss;
      stale_train = 0;
      return;
    }
    if (++stale_train >= decay_patience) {
      lr *= lr_decay;
      stale_train = 0;
    }
  }

  /// Returns true when `loss` sets a new validation best.
  bool observe_val(double loss) {
    if (loss < best_val) {
      best_val = loss;
      stale_val = 0;
      return true;
    }
    if (++stale_val >= stop_patience) should_stop = true;
    return false;
  }
};

template <typename S>
struct Utterance {
  Tensor<S> mixture;
  std::vector<Tensor<S>> refs;
};

template <typename S>
std::vector<Tensor<S>> model_forward(const FdModel<S>& m, const Tensor<S>& wav, Path p) {
  return fd_forward(m, wav, p);
}
template <typename S>
std::vector<Tensor<S>> model_forward(const TdModel<S>& m, const Tensor<S>& wav, Path p) {
  return td_forward(m, wav, p);
}

template <typename S>
struct UtteranceLoss {
  Tensor<S> total;  // scalar on the tape
  double value = 0.0;
  double offline = std::numeric_limits<double>::quiet_NaN();
  double online = std::numeric_limits<double>::quiet_NaN();
};

/// Both-path objective: w_off * PIT(offline outputs) + w_on * PIT(online
/// outputs), assembled as one expression so a single backward pass sends
/// each shared parameter the sum of its per-path gradients.
template <typename Model, typename S = typename Model::scalar_type>
UtteranceLoss<S> multitask_losses(const Model& m, const Utterance<S>& utt,
                                  double w_offline, double w_online) {
  auto off = pit_neg_snr(model_forward(m, utt.mixture, Path::Offline), utt.refs);
  auto on = pit_neg_snr(model_forward(m, utt.mixture, Path::Online), utt.refs);
  UtteranceLoss<S> out;
  out.total = add(scale(off.loss, static_cast<S>(w_offline)),
                  scale(on.loss, static_cast<S>(w_online)));
  out.offline = off.value;
  out.online = on.value;
  out.value = w_offline * off.value + w_online * on.value;
  return out;
}

template <typename Model, typename S = typename Model::scalar_type>
UtteranceLoss<S> utterance_loss(const Model& m, const Utterance<S>& utt,
                                const TrainConfig& cfg) {
  if (is_multitask(cfg.strategy))
    return multitask_losses(m, utt, cfg.w_offline, cfg.w_online);
  const Path path = primary_path(cfg.strategy);
  auto pit = pit_neg_snr(model_forward(m, utt.mixture, path), utt.refs);
  UtteranceLoss<S> out;
  out.total = pit.loss;
  out.value = pit.value;
  (path == Path::Offline ? out.offline : out.online) = pit.value;
  return out;
}

struct EpochRecord {
  Index epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
  double loss_offline = std::numeric_limits<double>::quiet_NaN();
  double loss_online = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  std::vector<EpochRecord> history;
  double best_val = std::numeric_limits<double>::infinity();
  Index best_epoch = -1;
  bool early_stopped = false;
};

/// One record per line; NaN path losses (strategy did not compute that
/// path) are omitted from their record.
inline void write_history(const std::string& path, const std::vector<EpochRecord>& history) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ShapeError("cannot write history log '" + path + "'");
  for (const auto& r : history) {
    nlohmann::json j{{"epoch", r.epoch},
                     {"train_loss", r.train_loss},
                     {"val_loss", r.val_loss},
                     {"lr", r.lr}};
    if (std::isfinite(r.loss_offline)) j["loss_offline"] = r.loss_offline;
    if (std::isfinite(r.loss_online)) j["loss_online"] = r.loss_online;
    f << j.dump() << "\n";
  }
}

/// Seeded epoch loop: shuffle, batch, forward on the strategy's path(s),
/// permutation-invariant negative SNR, clip, Adam. The training-loss plateau
/// drives LR decay; the validation plateau stops training; the parameters of
/// the best validation epoch are restored into the model before returning.
template <typename Model, typename S = typename Model::scalar_type>
TrainResult train_loop(Model& model, const std::vector<Utterance<S>>& train_set,
                       const std::vector<Utterance<S>>& val_set, const TrainConfig& cfg,
                       const std::string& history_path = "") {
  cfg.validate();
  if (train_set.empty() || val_set.empty())
    throw ShapeError("train_loop: train and validation sets must be nonempty");

  std::vector<Tensor<S>> params;
  for (auto& np : model.named_parameters()) {
    np.tensor.set_requires_grad(true);
    params.push_back(np.tensor);
  }
  AdamOptimizer<S> opt(params);
  TrainSchedule sched(cfg);
  Rng rng(cfg.seed);
  TrainResult result;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::vector<S>> best_params;

  for (Index epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1],
                order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<Index>(i) - 1))]);

    const double lr_used = sched.lr;
    double train_acc = 0.0, off_acc = 0.0, on_acc = 0.0;
    bool any_off = false, any_on = false;

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const auto count =
          std::min(static_cast<std::size_t>(cfg.batch_size), order.size() - start);
      opt.zero_grad();
      for (std::size_t k = 0; k < count; ++k) {
        auto ul = utterance_loss(model, train_set[order[start + k]], cfg);
        if (!std::isfinite(ul.value))
          throw NumericError("training diverged: non-finite loss at epoch " +
                             std::to_string(epoch));
        scale(ul.total, S(1) / static_cast<S>(count)).backward();
        train_acc += ul.value;
        if (std::isfinite(ul.offline)) { off_acc += ul.offline; any_off = true; }
        if (std::isfinite(ul.online)) { on_acc += ul.online; any_on = true; }
      }
      clip_gradients(params, cfg.clip_norm);
      opt.step(lr_used);
    }

    double val_acc = 0.0;
    {
      NoGradGuard ng;
      for (const auto& utt : val_set) val_acc += utterance_loss(model, utt, cfg).value;
    }

    const auto n_train = static_cast<double>(train_set.size());
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = train_acc / n_train;
    rec.val_loss = val_acc / static_cast<double>(val_set.size());
    rec.lr = lr_used;
    if (any_off) rec.loss_offline = off_acc / n_train;
    if (any_on) rec.loss_online = on_acc / n_train;
    result.history.push_back(rec);

    sched.observe_train(rec.train_loss);
    if (sched.observe_val(rec.val_loss)) {
      result.best_val = rec.val_loss;
      result.best_epoch = epoch;
      best_params.clear();
      for (const auto& p : params)
        best_params.emplace_back(p.values().begin(), p.values().end());
    }
    if (sched.should_stop) {
      result.early_stopped = true;
      break;
    }
  }

  if (!best_params.empty())
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto dst = params[i].values_mut();
      std::copy(best_params[i].begin(), best_params[i].end(), dst.begin());
    }
  if (!history_path.empty()) write_history(history_path, result.history);
  return result;
}

}  // namespace sep
