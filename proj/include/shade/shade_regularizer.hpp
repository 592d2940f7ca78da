#ifndef SHADE_SHADE_REGULARIZER_HPP
#define SHADE_SHADE_REGULARIZER_HPP

#include <cmath>
#include <cstddef>
#include <functional>
#include <iomanip>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "shade/tensor.hpp"

namespace shade {

/// Mode probabilities of the per-unit binary latent code given a pre-activation:
/// p1 = 1 - exp(-relu(y)), p0 = exp(-relu(y)).
struct Posterior {
  double p0;
  double p1;
};

inline Posterior posterior(double y) {
  const double p0 = std::exp(-(y > 0.0 ? y : 0.0));
  return {p0, 1.0 - p0};
}

/// d p1 / dy. At y = 0 the right derivative (1) is used.
inline double posterior_derivative(double y) { return y >= 0.0 ? std::exp(-y) : 0.0; }

/// Per-sample, per-unit penalty sum_z p(z|y) (y - mu_z)^2.
inline double unit_loss(double y, double mu0, double mu1) {
  const auto [p0, p1] = posterior(y);
  return p0 * (y - mu0) * (y - mu0) + p1 * (y - mu1) * (y - mu1);
}

struct UnitGradient {
  double delta1;  // moves y toward the more likely mode (margin term)
  double delta2;  // pulls y toward the weighted mode means
  double total() const { return delta1 + delta2; }
};

/// Derivative of unit_loss in y with the mode means held fixed.
inline UnitGradient unit_gradient(double y, double mu0, double mu1) {
  const double s = posterior(y).p1;
  const double ds = posterior_derivative(y);
  const double d1 = ds * ((y - mu1) * (y - mu1) - (y - mu0) * (y - mu0));
  const double d2 = 2.0 * s * (y - mu1) + 2.0 * (1.0 - s) * (y - mu0);
  return {d1, d2};
}

/// Moving estimates for one unit: mu_z ~ E(Y | Z = z), p_z ~ p(Z = z).
struct UnitStats {
  double mu0 = -1.0;
  double mu1 = 1.0;
  double p0 = 0.5;
  double p1 = 0.5;
};

namespace detail {

/// Calls fn(unit, flat_index) for every scalar of a pre-activation tensor.
/// Rank-2 tensors are [K x units]; rank-4 tensors are [N x channels x H x W]
/// with each channel one unit and spatial positions treated as samples.
template <typename Fn>
void for_each_unit_sample(const Tensor& y, Fn&& fn) {
  if (y.rank() == 2) {
    const std::size_t k = y.dim(0), d = y.dim(1);
    for (std::size_t n = 0; n < k; ++n) {
      for (std::size_t i = 0; i < d; ++i) fn(i, n * d + i);
    }
  } else if (y.rank() == 4) {
    const std::size_t c = y.dim(1), plane = y.dim(2) * y.dim(3);
    for (std::size_t n = 0; n < y.dim(0); ++n) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t base = (n * c + ch) * plane;
        for (std::size_t s = 0; s < plane; ++s) fn(ch, base + s);
      }
    }
  } else {
    throw std::invalid_argument("shade: pre-activation must be rank 2 or 4, got " +
                                shape_string(y.shape()));
  }
}

inline std::size_t units_of(const Tensor& y) { return y.rank() >= 2 ? y.dim(1) : 0; }

inline std::size_t samples_per_unit(const Tensor& y) {
  return y.size() / (units_of(y) ? units_of(y) : 1);
}

}  // namespace detail

/// Per-layer, per-unit moving statistics plus the per-layer weights.
class ShadeState {
 public:
  static constexpr double kMinPrior = 1e-8;

  ShadeState() = default;
  explicit ShadeState(const std::vector<std::size_t>& units_per_layer, double decay = 0.8)
      : decay_(decay), layer_weights_(units_per_layer.size(), 1.0) {
    if (!(decay >= 0.0 && decay <= 1.0)) throw std::invalid_argument("shade: decay outside [0,1]");
    for (std::size_t n : units_per_layer) units_.emplace_back(n);
  }

  double decay() const { return decay_; }
  std::size_t num_layers() const { return units_.size(); }
  std::size_t num_units(std::size_t layer) const { return units_.at(layer).size(); }

  UnitStats& unit(std::size_t layer, std::size_t i) { return units_.at(layer).at(i); }
  const UnitStats& unit(std::size_t layer, std::size_t i) const { return units_.at(layer).at(i); }

  const std::vector<double>& layer_weights() const { return layer_weights_; }
  void set_layer_weights(std::vector<double> w) {
    if (w.size() != units_.size()) {
      throw std::invalid_argument("shade: expected " + std::to_string(units_.size()) +
                                  " layer weights, got " + std::to_string(w.size()));
    }
    for (double b : w) {
      if (!(b >= 0.0)) throw std::invalid_argument("shade: layer weight must be >= 0");
    }
    layer_weights_ = std::move(w);
  }

  /// One moving-average step for a layer from one mini-batch. The prior p_z is
  /// refreshed first and the refreshed value divides the mean update; when it
  /// falls below kMinPrior the mean of that mode is left unchanged.
  void update(std::size_t layer, const Tensor& pre_activation) {
    auto& stats = units_.at(layer);
    if (detail::units_of(pre_activation) != stats.size()) {
      throw std::invalid_argument("shade: layer " + std::to_string(layer) + " has " +
                                  std::to_string(stats.size()) + " units, pre-activation is " +
                                  shape_string(pre_activation.shape()));
    }
    const std::size_t k = detail::samples_per_unit(pre_activation);
    if (k == 0) throw std::invalid_argument("shade: empty batch");
    std::vector<double> sum_p0(stats.size()), sum_p1(stats.size());
    std::vector<double> sum_p0y(stats.size()), sum_p1y(stats.size());
    detail::for_each_unit_sample(pre_activation, [&](std::size_t i, std::size_t idx) {
      const double y = pre_activation[idx];
      const auto post = posterior(y);
      sum_p0[i] += post.p0;
      sum_p1[i] += post.p1;
      sum_p0y[i] += post.p0 * y;
      sum_p1y[i] += post.p1 * y;
    });
    const double lam = decay_;
    const double inv_k = 1.0 / static_cast<double>(k);
    for (std::size_t i = 0; i < stats.size(); ++i) {
      auto& u = stats[i];
      u.p0 = lam * u.p0 + (1.0 - lam) * inv_k * sum_p0[i];
      if (u.p0 >= kMinPrior) u.mu0 = lam * u.mu0 + (1.0 - lam) * inv_k * sum_p0y[i] / u.p0;
      u.p1 = lam * u.p1 + (1.0 - lam) * inv_k * sum_p1[i];
      if (u.p1 >= kMinPrior) u.mu1 = lam * u.mu1 + (1.0 - lam) * inv_k * sum_p1y[i] / u.p1;
    }
  }

  void update(std::span<const Tensor> pre_activations) {
    if (pre_activations.size() != units_.size()) {
      throw std::invalid_argument("shade: expected " + std::to_string(units_.size()) +
                                  " pre-activation tensors, got " +
                                  std::to_string(pre_activations.size()));
    }
    for (std::size_t l = 0; l < units_.size(); ++l) update(l, pre_activations[l]);
  }

  /// Diagnostic dump, columns layer,unit,mu0,mu1,p0,p1.
  void write_csv(std::ostream& os) const {
    os << "layer,unit,mu0,mu1,p0,p1\n";
    os << std::setprecision(17);
    for (std::size_t l = 0; l < units_.size(); ++l) {
      for (std::size_t i = 0; i < units_[l].size(); ++i) {
        const auto& u = units_[l][i];
        os << l << ',' << i << ',' << u.mu0 << ',' << u.mu1 << ',' << u.p0 << ',' << u.p1
           << '\n';
      }
    }
  }

  friend bool operator==(const ShadeState& a, const ShadeState& b) {
    if (a.decay_ != b.decay_ || a.layer_weights_ != b.layer_weights_ ||
        a.units_.size() != b.units_.size()) {
      return false;
    }
    for (std::size_t l = 0; l < a.units_.size(); ++l) {
      if (a.units_[l].size() != b.units_[l].size()) return false;
      for (std::size_t i = 0; i < a.units_[l].size(); ++i) {
        const auto& x = a.units_[l][i];
        const auto& y = b.units_[l][i];
        if (x.mu0 != y.mu0 || x.mu1 != y.mu1 || x.p0 != y.p0 || x.p1 != y.p1) return false;
      }
    }
    return true;
  }

 private:
  double decay_ = 0.8;
  std::vector<std::vector<UnitStats>> units_;
  std::vector<double> layer_weights_;
};

struct ShadeLoss {
  double value = 0.0;
  /// d value / d pre-activation, one tensor per layer (empty if not requested).
  std::vector<Tensor> grads;
};

/// sum_l beta_l sum_i (1/K) sum_k sum_z p(z|y) (y - mu_z)^2, mode means fixed.
inline ShadeLoss shade_loss(const ShadeState& state, std::span<const Tensor> pre_activations,
                            bool with_grad = true) {
  if (pre_activations.size() != state.num_layers()) {
    throw std::invalid_argument("shade: loss needs " + std::to_string(state.num_layers()) +
                                " cached pre-activations, got " +
                                std::to_string(pre_activations.size()));
  }
  ShadeLoss out;
  for (std::size_t l = 0; l < state.num_layers(); ++l) {
    const Tensor& y = pre_activations[l];
    if (y.empty()) {
      throw std::invalid_argument("shade: layer " + std::to_string(l) +
                                  " has no cached pre-activation");
    }
    if (detail::units_of(y) != state.num_units(l)) {
      throw std::invalid_argument("shade: pre-activation " + shape_string(y.shape()) +
                                  " does not match layer " + std::to_string(l));
    }
    const double beta = state.layer_weights()[l];
    const double scale = beta / static_cast<double>(detail::samples_per_unit(y));
    Tensor grad;
    if (with_grad) grad = Tensor(y.shape());
    double acc = 0.0;
    detail::for_each_unit_sample(y, [&](std::size_t i, std::size_t idx) {
      const auto& u = state.unit(l, i);
      acc += unit_loss(y[idx], u.mu0, u.mu1);
      if (with_grad) grad[idx] = scale * unit_gradient(y[idx], u.mu0, u.mu1).total();
    });
    out.value += scale * acc;
    if (with_grad) out.grads.push_back(std::move(grad));
  }
  return out;
}

/// Gradient of one unit's single-sample penalty with respect to the weights
/// of a dense unit y = w.x + b: (delta1 + delta2) x.
inline std::vector<double> shade_gradient(const UnitStats& stats, double y,
                                          std::span<const double> x) {
  const double factor = unit_gradient(y, stats.mu0, stats.mu1).total();
  std::vector<double> g(x.begin(), x.end());
  for (double& v : g) v *= factor;
  return g;
}

}  // namespace shade

#endif  // SHADE_SHADE_REGULARIZER_HPP
