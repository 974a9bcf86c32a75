#pragma once

#include <vector>

#include "sep/metrics/metrics.hpp"
#include "sep/training/train.hpp"

namespace sep {

/// Best-permutation metrics over a dataset on the requested path. Forward
/// passes run without building the tape; parameters are read-only.
template <typename Model, typename S = typename Model::scalar_type>
EvalReport evaluate(const Model& model, const std::vector<Utterance<S>>& dataset,
                    Path path) {
  if (dataset.empty()) throw ShapeError("evaluate: empty dataset");
  EvalReport rep;
  NoGradGuard ng;
  for (const auto& utt : dataset) {
    auto outs = model_forward(model, utt.mixture, path);
    rep.utterances.push_back(evaluate_utterance(outs, utt.mixture, utt.refs));
  }
  detail::finalize_report(rep);
  return rep;
}

}  // namespace sep
