#ifndef SHADE_INFO_RECONSTRUCTION_HPP
#define SHADE_INFO_RECONSTRUCTION_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "shade/info/discrete.hpp"
#include "shade/info/estimators.hpp"
#include "shade/rng.hpp"

namespace shade::info {

inline constexpr std::size_t kMaxExhaustiveSupport = 16;
inline constexpr double kMaxBruteForceReconstructors = 1 << 20;

/// Expected zero-one error of the reconstructor x_hat(y) = guess[y] on a
/// joint with axes (X, Y).
inline double zero_one_error(const DiscreteJoint& xy, const std::vector<std::size_t>& guess) {
  const std::size_t ny = xy.dims()[1];
  double correct = 0.0;
  for (std::size_t y = 0; y < ny; ++y) correct += xy.probs()[guess[y] * ny + y];
  return 1.0 - correct;
}

struct DiscreteReconstructionReport {
  double h_x_given_y_bits = 0.0;
  double error = 0.0;        // error of the argmax reconstructor
  double lower_bound = 0.0;  // (H(X|Y) - 1) / log2|X|
  double upper_bound = 0.0;  // 1 - 2^-H(X|Y)
  double lower_slack = 0.0;  // error - lower_bound
  double upper_slack = 0.0;  // upper_bound - error
  double jensen_slack = 0.0; // log2(1 - error) + H(X|Y)
  bool brute_forced = false;
  double best_error = 0.0;   // minimum over all |X|^|Y| reconstructors, if brute-forced
  std::size_t reconstructors_checked = 0;

  bool ok(double tol = 1e-9) const {
    return lower_slack >= -tol && upper_slack >= -tol && jensen_slack >= -tol &&
           (!brute_forced || error <= best_error + tol);
  }
};

/// Zero-one reconstruction error of X from Y under the MAP reconstructor,
/// compared with the entropy bounds (H in bits). When |X|^|Y| is small
/// enough every reconstructor is enumerated to confirm the MAP one is optimal.
inline DiscreteReconstructionReport reconstruction_bounds_discrete(const DiscreteJoint& xy) {
  if (xy.rank() != 2) throw std::invalid_argument("reconstruction: joint must have axes (X, Y)");
  const std::size_t nx = xy.dims()[0], ny = xy.dims()[1];
  if (nx > kMaxExhaustiveSupport || ny > kMaxExhaustiveSupport) {
    throw std::invalid_argument("reconstruction: support " + std::to_string(nx) + "x" +
                                std::to_string(ny) + " exceeds exhaustive limit " +
                                std::to_string(kMaxExhaustiveSupport));
  }
  DiscreteReconstructionReport r;
  r.h_x_given_y_bits = nats_to_bits(conditional_entropy(xy, {0}, {1}));

  std::vector<std::size_t> map_guess(ny, 0);
  for (std::size_t y = 0; y < ny; ++y) {
    for (std::size_t x = 1; x < nx; ++x) {
      if (xy.probs()[x * ny + y] > xy.probs()[map_guess[y] * ny + y]) map_guess[y] = x;
    }
  }
  r.error = zero_one_error(xy, map_guess);
  const double h = r.h_x_given_y_bits;
  r.lower_bound = nx >= 2 ? (h - 1.0) / std::log2(static_cast<double>(nx))
                          : -std::numeric_limits<double>::infinity();
  r.upper_bound = 1.0 - std::exp2(-h);
  r.lower_slack = r.error - r.lower_bound;
  r.upper_slack = r.upper_bound - r.error;
  r.jensen_slack = std::log2(1.0 - r.error) + h;

  if (std::pow(static_cast<double>(nx), static_cast<double>(ny)) <= kMaxBruteForceReconstructors) {
    r.brute_forced = true;
    r.best_error = 1.0;
    std::vector<std::size_t> guess(ny, 0);
    while (true) {
      r.best_error = std::min(r.best_error, zero_one_error(xy, guess));
      ++r.reconstructors_checked;
      std::size_t pos = 0;
      while (pos < ny && ++guess[pos] == nx) guess[pos++] = 0;
      if (pos == ny) break;
    }
  }
  return r;
}

/// Jointly Gaussian (X, Y).
struct GaussianPair {
  double mean_x = 0.0, mean_y = 0.0;
  double var_x = 1.0, var_y = 1.0, cov = 0.0;

  /// Y = X + N(0, noise_var), X ~ N(0, var_x).
  static GaussianPair additive_noise(double var_x, double noise_var) {
    return {0.0, 0.0, var_x, var_x + noise_var, var_x};
  }

  void validate() const {
    if (!(var_x > 0.0) || !(var_y > 0.0) || !(var_x * var_y - cov * cov > 1e-12 * var_x * var_y)) {
      throw std::invalid_argument("gaussian pair: singular covariance");
    }
  }

  double conditional_variance() const { return var_x - cov * cov / var_y; }
  double conditional_mean(double y) const { return mean_x + cov / var_y * (y - mean_y); }
  double slope() const { return cov / var_y; }

  /// Samples stored interleaved as (x, y) pairs.
  std::vector<double> sample(std::size_t n, Rng& rng) const {
    validate();
    const double sy = std::sqrt(var_y);
    const double b = cov / var_y;
    const double resid = std::sqrt(conditional_variance());
    std::vector<double> out(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
      const double y = mean_y + sy * rng.normal();
      out[2 * i] = mean_x + b * (y - mean_y) + resid * rng.normal();
      out[2 * i + 1] = y;
    }
    return out;
  }
};

struct ContinuousReconstructionReport {
  double h_x_given_y = 0.0;     // nats, closed form
  double var_x_given_y = 0.0;   // closed form, = optimal expected squared error
  double entropy_bound = 0.0;   // e^{2H} / (2 pi e)
  double bound_slack = 0.0;     // var_x_given_y - entropy_bound
  double sample_mse = 0.0;      // conditional-mean reconstructor on the samples
  double relative_mse_error = 0.0;
  /// (slope, sample MSE) for alternative linear reconstructors x = a + s y.
  std::vector<std::pair<double, double>> alternatives;

  bool ok(double mse_tol = 0.02) const {
    if (bound_slack < -1e-12 * var_x_given_y || relative_mse_error > mse_tol) return false;
    for (const auto& [s, mse] : alternatives) {
      if (!(mse > sample_mse)) return false;
    }
    return true;
  }
};

/// Checks e^{2H(X|Y)}/(2 pi e) <= Var(X|Y) in closed form and that the
/// conditional-mean reconstructor reaches Var(X|Y) on the given samples.
inline ContinuousReconstructionReport reconstruction_bounds_continuous(
    const GaussianPair& model, const std::vector<double>& pairs,
    const std::vector<double>& alternative_slope_factors = {0.0, 0.8, 1.2}) {
  model.validate();
  if (pairs.size() < 4 || pairs.size() % 2 != 0) {
    throw std::invalid_argument("reconstruction: need interleaved (x, y) samples");
  }
  ContinuousReconstructionReport r;
  r.var_x_given_y = model.conditional_variance();
  r.h_x_given_y = gaussian_entropy(r.var_x_given_y);
  r.entropy_bound = std::exp(2.0 * r.h_x_given_y) / (2.0 * std::numbers::pi * std::numbers::e);
  r.bound_slack = r.var_x_given_y - r.entropy_bound;

  const std::size_t n = pairs.size() / 2;
  auto mse_for = [&](double slope) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = pairs[2 * i], y = pairs[2 * i + 1];
      const double xhat = model.mean_x + slope * (y - model.mean_y);
      acc += (x - xhat) * (x - xhat);
    }
    return acc / static_cast<double>(n);
  };
  r.sample_mse = mse_for(model.slope());
  r.relative_mse_error = std::abs(r.sample_mse - r.var_x_given_y) / r.var_x_given_y;
  for (double f : alternative_slope_factors) {
    // A zero true slope makes every factor collapse onto it; perturb additively instead.
    const double s = model.slope() == 0.0 ? f - 1.0 : model.slope() * f;
    if (s == model.slope()) continue;
    r.alternatives.emplace_back(s, mse_for(s));
  }
  return r;
}

}  // namespace shade::info

#endif  // SHADE_INFO_RECONSTRUCTION_HPP
