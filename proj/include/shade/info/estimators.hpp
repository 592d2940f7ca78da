#ifndef SHADE_INFO_ESTIMATORS_HPP
#define SHADE_INFO_ESTIMATORS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "shade/tensor.hpp"

namespace shade::info {

inline constexpr std::size_t kDefaultBins = 64;

/// 0.5 ln(2 pi e var): entropy of a Gaussian with that variance, and the
/// maximum differential entropy of any density with that variance.
inline double gaussian_entropy(double variance) {
  return 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * variance);
}

enum class EntropyEstimator { PluginHistogram, MillerMadow };

inline const char* to_string(EntropyEstimator e) {
  return e == EntropyEstimator::MillerMadow ? "miller-madow" : "plugin-histogram";
}

struct EntropyEstimate {
  double value = 0.0;         // discrete entropy of the binned samples (nats)
  double differential = 0.0;  // value + ln(bin width)
  EntropyEstimator estimator = EntropyEstimator::PluginHistogram;
  std::size_t samples = 0;
  std::size_t bins = kDefaultBins;
  double bin_width = 0.0;
  std::size_t occupied = 0;
  bool degenerate = false;  // zero-width data range
};

/// Uniform bins over [lo, hi]; the last bin is closed on the right.
struct BinSpec {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t bins = kDefaultBins;

  static BinSpec spanning(std::span<const double> samples, std::size_t bins = kDefaultBins) {
    if (samples.empty()) throw std::invalid_argument("bins: no samples");
    const auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
    return {*mn, *mx, bins};
  }

  double width() const { return (hi - lo) / static_cast<double>(bins); }
  bool degenerate() const { return !(hi > lo); }

  std::size_t index(double v) const {
    const double t = (v - lo) / (hi - lo) * static_cast<double>(bins);
    if (!(t > 0.0)) return 0;
    const auto i = static_cast<std::size_t>(t);
    return i >= bins ? bins - 1 : i;
  }
};

/// Plug-in entropy of a (possibly weighted) histogram over `spec`. Weights,
/// when given, need not be normalized. The Miller-Madow correction adds
/// (m - 1) / 2K with m occupied bins and K the (effective) sample count.
inline EntropyEstimate histogram_entropy(std::span<const double> samples, const BinSpec& spec,
                                         std::optional<std::span<const double>> weights = std::nullopt,
                                         bool miller_madow = false) {
  EntropyEstimate e;
  e.samples = samples.size();
  e.bins = spec.bins;
  e.estimator = miller_madow ? EntropyEstimator::MillerMadow : EntropyEstimator::PluginHistogram;
  if (spec.degenerate()) {
    e.degenerate = true;
    return e;
  }
  e.bin_width = spec.width();
  std::vector<double> mass(spec.bins, 0.0);
  double total = 0.0, total_sq = 0.0;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const double w = weights ? (*weights)[k] : 1.0;
    mass[spec.index(samples[k])] += w;
    total += w;
    total_sq += w * w;
  }
  if (total <= 0.0) {
    e.degenerate = true;
    return e;
  }
  double h = 0.0;
  for (double m : mass) {
    if (m > 0.0) {
      const double p = m / total;
      h -= p * std::log(p);
      ++e.occupied;
    }
  }
  if (miller_madow) {
    const double k_eff = total * total / total_sq;
    h += static_cast<double>(e.occupied - 1) / (2.0 * k_eff);
  }
  e.value = h;
  e.differential = h + std::log(e.bin_width);
  return e;
}

/// Histogram entropy with `bins` uniform bins spanning the sample range.
inline EntropyEstimate sample_entropy(std::span<const double> samples,
                                      std::size_t bins = kDefaultBins,
                                      bool miller_madow = false) {
  if (samples.size() < 2) throw std::invalid_argument("sample_entropy: need at least 2 samples");
  if (bins == 0) throw std::invalid_argument("sample_entropy: zero bins");
  return histogram_entropy(samples, BinSpec::spanning(samples, bins), std::nullopt, miller_madow);
}

struct VarianceBoundReport {
  double entropy = 0.0;   // histogram estimate of H(Y) or H(Y|Z), nats
  double variance = 0.0;  // Var(Y) or sum_z p(z) Var(Y|Z=z)
  double bound = 0.0;     // 0.5 ln(2 pi e Var), averaged over modes when conditional
  double gap = 0.0;       // bound - entropy
  std::size_t samples = 0;
  bool degenerate = false;

  bool ok(double tolerance = 0.05) const { return degenerate || gap >= -tolerance; }
};

/// Compares a histogram entropy estimate with the Gaussian variance bound.
/// With `mode_posteriors` (p(Z=1|y) per sample) the comparison is made per
/// mode using posterior-weighted statistics and combined with weights p(z).
inline VarianceBoundReport variance_bound_check(
    std::span<const double> samples, std::optional<std::span<const double>> mode_posteriors = std::nullopt,
    std::size_t bins = kDefaultBins) {
  if (samples.size() < 2) throw std::invalid_argument("variance_bound_check: need >= 2 samples");
  VarianceBoundReport r;
  r.samples = samples.size();
  const BinSpec spec = BinSpec::spanning(samples, bins);
  if (!mode_posteriors) {
    r.variance = reduce_var(samples);
    if (r.variance < 1e-12 || spec.degenerate()) {
      r.degenerate = true;
      return r;
    }
    r.entropy = histogram_entropy(samples, spec).differential;
    r.bound = gaussian_entropy(r.variance);
    r.gap = r.bound - r.entropy;
    return r;
  }
  if (mode_posteriors->size() != samples.size()) {
    throw std::invalid_argument("variance_bound_check: one posterior per sample required");
  }
  std::vector<double> w1(mode_posteriors->begin(), mode_posteriors->end());
  std::vector<double> w0(w1.size());
  for (std::size_t k = 0; k < w1.size(); ++k) w0[k] = 1.0 - w1[k];
  const double k_total = static_cast<double>(samples.size());
  for (const auto* w : {&w0, &w1}) {
    double mass = 0.0;
    for (double v : *w) mass += v;
    if (mass <= 0.0) continue;
    const double pz = mass / k_total;
    const double var = reduce_var(samples, std::span<const double>(*w));
    if (var < 1e-12) {
      r.degenerate = true;
      return r;
    }
    r.variance += pz * var;
    r.entropy += pz * histogram_entropy(samples, spec, std::span<const double>(*w)).differential;
    r.bound += pz * gaussian_entropy(var);
  }
  r.gap = r.bound - r.entropy;
  return r;
}

}  // namespace shade::info

#endif  // SHADE_INFO_ESTIMATORS_HPP
