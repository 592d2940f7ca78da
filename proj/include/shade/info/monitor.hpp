#ifndef SHADE_INFO_MONITOR_HPP
#define SHADE_INFO_MONITOR_HPP

#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "shade/data/dataset.hpp"
#include "shade/info/estimators.hpp"
#include "shade/network.hpp"
#include "shade/shade_regularizer.hpp"

namespace shade::info {

inline constexpr std::size_t kMinClassSamples = 10;

/// Histogram entropy estimates for one unit of one layer (differential, nats).
struct UnitEntropy {
  std::size_t unit = 0;
  double h_y = 0.0;
  double h_y_given_c = 0.0;
  double h_y_given_z = 0.0;
  // Gaussian variance bounds 0.5 ln(2 pi e Var) for the same partitions;
  // NaN when some part has zero variance.
  double bound_y = 0.0;
  double bound_y_given_c = 0.0;
  double bound_y_given_z = 0.0;
  std::size_t samples = 0;
  bool degenerate = false;
  std::vector<std::size_t> excluded_classes;  // fewer than kMinClassSamples samples
};

/// Per-unit samples of a pre-activation tensor, with the class label of the
/// row each sample came from. Conv channels are units with spatial positions
/// folded into the samples.
struct UnitSamples {
  std::vector<std::vector<double>> values;
  std::vector<std::vector<int>> labels;
};

inline UnitSamples collect_unit_samples(const Tensor& pre_activation, std::span<const int> labels) {
  if (pre_activation.rank() != 2 && pre_activation.rank() != 4) {
    throw std::invalid_argument("monitor: pre-activation must be rank 2 or 4");
  }
  if (pre_activation.dim(0) != labels.size()) {
    throw std::invalid_argument("monitor: one label per row required");
  }
  const std::size_t units = pre_activation.dim(1);
  const std::size_t per_row = pre_activation.row_size() / units;
  UnitSamples s;
  s.values.resize(units);
  s.labels.resize(units);
  for (auto& v : s.values) v.reserve(labels.size() * per_row);
  shade::detail::for_each_unit_sample(pre_activation, [&](std::size_t i, std::size_t idx) {
    s.values[i].push_back(pre_activation[idx]);
    s.labels[i].push_back(labels[idx / pre_activation.row_size()]);
  });
  return s;
}

/// H(Y), H(Y|C) (partition by label, weighted by p(c)) and H(Y|Z) (soft
/// partition by the latent-code posterior) for each unit. All estimates share
/// one 64-bin grid spanning the unit's sample range.
inline std::vector<UnitEntropy> conditional_entropy_report(const Tensor& pre_activation,
                                                           std::span<const int> labels,
                                                           std::size_t num_classes,
                                                           std::size_t bins = kDefaultBins) {
  const auto samples = collect_unit_samples(pre_activation, labels);
  std::vector<UnitEntropy> out;
  for (std::size_t u = 0; u < samples.values.size(); ++u) {
    const auto& y = samples.values[u];
    const auto& lab = samples.labels[u];
    UnitEntropy e;
    e.unit = u;
    e.samples = y.size();

    std::vector<std::size_t> counts(num_classes, 0);
    for (int l : lab) ++counts.at(static_cast<std::size_t>(l));
    for (std::size_t c = 0; c < num_classes; ++c) {
      if (counts[c] < kMinClassSamples) e.excluded_classes.push_back(c);
    }

    const BinSpec spec = BinSpec::spanning(y, bins);
    if (spec.degenerate()) {
      e.degenerate = true;
      out.push_back(std::move(e));
      continue;
    }
    e.h_y = histogram_entropy(y, spec).differential;
    auto bound_of = [](double var) {
      return var > 1e-12 ? gaussian_entropy(var) : std::numeric_limits<double>::quiet_NaN();
    };
    e.bound_y = bound_of(reduce_var(y));

    std::size_t kept = 0;
    for (std::size_t c = 0; c < num_classes; ++c) {
      if (counts[c] >= kMinClassSamples) kept += counts[c];
    }
    std::vector<double> w(y.size());
    for (std::size_t c = 0; c < num_classes && kept > 0; ++c) {
      if (counts[c] < kMinClassSamples) continue;
      for (std::size_t k = 0; k < y.size(); ++k) w[k] = lab[k] == static_cast<int>(c) ? 1.0 : 0.0;
      const double pc = static_cast<double>(counts[c]) / static_cast<double>(kept);
      e.h_y_given_c += pc * histogram_entropy(y, spec, std::span<const double>(w)).differential;
      e.bound_y_given_c += pc * bound_of(reduce_var(y, std::span<const double>(w)));
    }

    std::vector<double> w0(y.size()), w1(y.size());
    double m0 = 0.0, m1 = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k) {
      const auto post = posterior(y[k]);
      w0[k] = post.p0;
      w1[k] = post.p1;
      m0 += post.p0;
      m1 += post.p1;
    }
    const double total = m0 + m1;
    if (m0 > 0.0) {
      e.h_y_given_z += m0 / total * histogram_entropy(y, spec, std::span<const double>(w0)).differential;
      e.bound_y_given_z += m0 / total * bound_of(reduce_var(y, std::span<const double>(w0)));
    }
    if (m1 > 0.0) {
      e.h_y_given_z += m1 / total * histogram_entropy(y, spec, std::span<const double>(w1)).differential;
      e.bound_y_given_z += m1 / total * bound_of(reduce_var(y, std::span<const double>(w1)));
    }
    out.push_back(std::move(e));
  }
  return out;
}

/// Runs the network over `dataset` (evaluation mode, in fixed-size chunks) and
/// reports per-unit entropies of regularized layer `layer` (index into
/// Network::regularized_layers()).
inline std::vector<UnitEntropy> monitor_conditional_entropy(const Network& net,
                                                            const data::Dataset& dataset,
                                                            std::size_t layer,
                                                            std::size_t chunk = 500) {
  if (layer >= net.regularized_layers().size()) {
    throw std::invalid_argument("monitor: layer " + std::to_string(layer) + " is not regularized");
  }
  Network probe = net;
  std::vector<Tensor> parts;
  for (std::size_t start = 0; start < dataset.size(); start += chunk) {
    const std::size_t end = std::min(dataset.size(), start + chunk);
    std::vector<std::size_t> idx(end - start);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
    const auto batch = dataset.gather(idx);
    parts.push_back(probe.forward(batch.inputs).pre_activations.at(layer));
  }
  if (parts.empty()) throw std::invalid_argument("monitor: empty dataset");
  Shape shape = parts.front().shape();
  shape[0] = dataset.size();
  Tensor all(shape);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.data().begin(), p.data().end(), all.data().begin() + static_cast<std::ptrdiff_t>(offset));
    offset += p.size();
  }
  return conditional_entropy_report(all, dataset.labels, dataset.num_classes);
}

struct LayerEntropySummary {
  double mean_h_y_given_c = 0.0;
  double mean_h_y_given_z = 0.0;
};

inline LayerEntropySummary summarize(const std::vector<UnitEntropy>& units) {
  LayerEntropySummary s;
  if (units.empty()) return s;
  for (const auto& u : units) {
    s.mean_h_y_given_c += u.h_y_given_c;
    s.mean_h_y_given_z += u.h_y_given_z;
  }
  s.mean_h_y_given_c /= static_cast<double>(units.size());
  s.mean_h_y_given_z /= static_cast<double>(units.size());
  return s;
}

}  // namespace shade::info

#endif  // SHADE_INFO_MONITOR_HPP
