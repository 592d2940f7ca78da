#ifndef SHADE_BASELINE_REGULARIZER_HPP
#define SHADE_BASELINE_REGULARIZER_HPP

#include <stdexcept>
#include <string>
#include <vector>

#include "shade/network.hpp"

namespace shade {

enum class RegularizerKind { None, WeightDecay, Dropout, Shade };

inline RegularizerKind parse_regularizer_kind(const std::string& s) {
  if (s == "none") return RegularizerKind::None;
  if (s == "weight-decay") return RegularizerKind::WeightDecay;
  if (s == "dropout") return RegularizerKind::Dropout;
  if (s == "shade") return RegularizerKind::Shade;
  throw std::invalid_argument("unknown regularizer '" + s + "'");
}

inline std::string to_string(RegularizerKind k) {
  switch (k) {
    case RegularizerKind::None: return "none";
    case RegularizerKind::WeightDecay: return "weight-decay";
    case RegularizerKind::Dropout: return "dropout";
    case RegularizerKind::Shade: return "shade";
  }
  return "none";
}

struct RegularizerConfig {
  RegularizerKind kind = RegularizerKind::None;
  double beta = 0.0;                  // global weight of the penalty
  std::vector<double> layer_weights;  // SHADE per-layer weights; empty = all 1
  std::vector<double> dropout_rates;  // inputs of the last dense layers
  double decay = 0.8;                 // SHADE moving-average decay

  void validate() const {
    if (!(beta >= 0.0)) throw std::invalid_argument("regularizer: beta must be >= 0");
    for (double r : dropout_rates) {
      if (!(r >= 0.0 && r < 1.0)) throw std::invalid_argument("regularizer: dropout rate in [0,1)");
    }
  }

  /// True when the penalty contributes to the objective at all.
  bool active_penalty() const {
    return (kind == RegularizerKind::WeightDecay || kind == RegularizerKind::Shade) && beta > 0.0;
  }
};

/// 0.5 * sum ||W||^2 over weight tensors (biases excluded).
inline double weight_decay_loss(Network& net) {
  double acc = 0.0;
  for (const auto& p : net.all_parameters()) {
    if (!p.is_weight) continue;
    for (double w : p.value->data()) acc += w * w;
  }
  return 0.5 * acc;
}

/// Adds beta * W to the gradient of every trainable weight tensor.
inline void add_weight_decay_gradient(Network& net, double beta) {
  for (const auto& p : net.parameters()) {
    if (!p.is_weight) continue;
    auto w = p.value->data();
    auto g = p.grad->data();
    for (std::size_t i = 0; i < w.size(); ++i) g[i] += beta * w[i];
  }
}

}  // namespace shade

#endif  // SHADE_BASELINE_REGULARIZER_HPP
