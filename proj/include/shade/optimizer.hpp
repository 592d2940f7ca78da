#ifndef SHADE_OPTIMIZER_HPP
#define SHADE_OPTIMIZER_HPP

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "shade/layers.hpp"
#include "shade/tensor.hpp"

namespace shade {

enum class OptimizerKind { SgdMomentum, Adam };

inline OptimizerKind parse_optimizer_kind(const std::string& s) {
  if (s == "sgd-momentum" || s == "sgd") return OptimizerKind::SgdMomentum;
  if (s == "adam") return OptimizerKind::Adam;
  throw std::invalid_argument("unknown optimizer '" + s + "'");
}

inline std::string to_string(OptimizerKind k) {
  return k == OptimizerKind::Adam ? "adam" : "sgd-momentum";
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 1e-3;
  double lr_decay = 1.0;  // multiplicative, applied after every batch
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// SGD with momentum (v <- m v + g; w <- w - lr v) or Adam. State is keyed
/// by (layer, slot) so the set of trainable parameters may shrink (freezing)
/// without disturbing the remaining entries.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config) : config_(config), lr_(config.learning_rate) {
    if (!(config.learning_rate > 0.0)) throw std::invalid_argument("optimizer: lr must be > 0");
    if (!(config.lr_decay > 0.0 && config.lr_decay <= 1.0)) {
      throw std::invalid_argument("optimizer: lr_decay must be in (0, 1]");
    }
  }

  const OptimizerConfig& config() const { return config_; }
  double learning_rate() const { return lr_; }
  long steps() const { return steps_; }

  void step(const std::vector<ParamRef>& params) {
    ++steps_;
    for (const auto& p : params) {
      auto& st = state_[{p.layer, p.slot}];
      if (st.first.size() != p.value->size()) {
        st.first.assign(p.value->size(), 0.0);
        st.second.assign(p.value->size(), 0.0);
      }
      auto w = p.value->data();
      auto g = p.grad->data();
      if (config_.kind == OptimizerKind::SgdMomentum) {
        for (std::size_t i = 0; i < w.size(); ++i) {
          st.first[i] = config_.momentum * st.first[i] + g[i];
          w[i] -= lr_ * st.first[i];
        }
      } else {
        const double t = static_cast<double>(steps_);
        const double c1 = 1.0 - std::pow(config_.beta1, t);
        const double c2 = 1.0 - std::pow(config_.beta2, t);
        for (std::size_t i = 0; i < w.size(); ++i) {
          st.first[i] = config_.beta1 * st.first[i] + (1.0 - config_.beta1) * g[i];
          st.second[i] = config_.beta2 * st.second[i] + (1.0 - config_.beta2) * g[i] * g[i];
          const double mhat = st.first[i] / c1;
          const double vhat = st.second[i] / c2;
          w[i] -= lr_ * mhat / (std::sqrt(vhat) + config_.epsilon);
        }
      }
    }
    lr_ *= config_.lr_decay;
  }

 private:
  OptimizerConfig config_;
  double lr_;
  long steps_ = 0;
  // (first moment or velocity, second moment)
  std::map<std::pair<std::size_t, std::size_t>, std::pair<std::vector<double>, std::vector<double>>>
      state_;
};

}  // namespace shade

#endif  // SHADE_OPTIMIZER_HPP
