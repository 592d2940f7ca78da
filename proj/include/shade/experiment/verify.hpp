#ifndef SHADE_EXPERIMENT_VERIFY_HPP
#define SHADE_EXPERIMENT_VERIFY_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "shade/info/discrete.hpp"
#include "shade/info/estimators.hpp"
#include "shade/info/reconstruction.hpp"
#include "shade/network.hpp"
#include "shade/rng.hpp"
#include "shade/shade_regularizer.hpp"

namespace shade::experiment {

/// One measured quantity compared against a limit.
struct Check {
  std::string scope;
  std::string name;
  double measured = 0.0;
  double limit = 0.0;
  bool passed = false;
};

struct VerifyReport {
  std::vector<Check> checks;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
  }

  void add(std::string scope, std::string name, double measured, double limit, bool passed) {
    checks.push_back({std::move(scope), std::move(name), measured, limit, passed});
  }

  void append(const VerifyReport& other) {
    checks.insert(checks.end(), other.checks.begin(), other.checks.end());
  }

  void write_csv(std::ostream& os) const {
    os << "scope,check,measured,limit,passed\n" << std::setprecision(10);
    for (const auto& c : checks) {
      os << c.scope << ',' << c.name << ',' << c.measured << ',' << c.limit << ','
         << (c.passed ? 1 : 0) << '\n';
    }
  }
};

inline const std::vector<std::string>& verify_scopes() {
  static const std::vector<std::string> scopes{"algorithm1", "gradients", "bounds", "dpi",
                                               "reconstruction"};
  return scopes;
}

namespace detail {

inline double relative_error(double a, double b) {
  const double denom = std::max(std::abs(a), std::abs(b));
  return denom == 0.0 ? 0.0 : std::abs(a - b) / denom;
}

/// Full objective used by the network gradient check: cross-entropy plus
/// beta * SHADE penalty with fixed statistics.
inline double objective(Network& net, const ShadeState& state, double beta, const Tensor& x,
                        std::span<const int> labels) {
  const auto fwd = net.forward(x);
  return cross_entropy(fwd.logits, labels).loss + beta * shade_loss(state, fwd.pre_activations, false).value;
}

/// ||analytic - numeric|| / max(||analytic||, ||numeric||) over every
/// parameter of `net`.
inline double network_gradient_error(Network net, const ShadeState& state, double beta,
                                     const Tensor& x, std::span<const int> labels, double h = 1e-6) {
  auto fwd = net.forward(x);
  auto ce = cross_entropy(fwd.logits, labels);
  auto sl = shade_loss(state, fwd.pre_activations, true);
  for (auto& g : sl.grads) {
    for (auto& v : g.data()) v *= beta;
  }
  net.backward(ce.grad, sl.grads);
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (const auto& p : net.all_parameters()) {
    const Tensor analytic = *p.grad;
    for (std::size_t i = 0; i < p.value->size(); ++i) {
      const double keep = (*p.value)[i];
      (*p.value)[i] = keep + h;
      const double up = objective(net, state, beta, x, labels);
      (*p.value)[i] = keep - h;
      const double down = objective(net, state, beta, x, labels);
      (*p.value)[i] = keep;
      const double numeric = (up - down) / (2.0 * h);
      diff += (analytic[i] - numeric) * (analytic[i] - numeric);
      na += analytic[i] * analytic[i];
      nn += numeric * numeric;
    }
  }
  const double denom = std::sqrt(std::max(na, nn));
  return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

/// Nonzero biases. With zero biases a row whose ReLU inputs are all
/// inactive puts the next pre-activation exactly on the posterior's kink at
/// 0, where central differences straddle two one-sided derivatives.
inline void jitter_biases(Network& net, Rng& rng) {
  for (const auto& p : net.all_parameters()) {
    if (p.is_weight) continue;
    for (auto& v : p.value->data()) v = rng.uniform(0.05, 0.2) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
  }
}

/// Statistics that keep every unit's mode means on opposite sides of zero.
inline ShadeState random_state(const std::vector<std::size_t>& units, Rng& rng) {
  ShadeState s(units);
  for (std::size_t l = 0; l < units.size(); ++l) {
    for (std::size_t i = 0; i < units[l]; ++i) {
      auto& u = s.unit(l, i);
      u.mu0 = rng.uniform(-2.0, 0.0);
      u.mu1 = rng.uniform(0.0, 2.0);
    }
  }
  return s;
}

}  // namespace detail

/// Closed-form moving-average behaviour: the single-sample step from the
/// initial statistics and the fixed point under a constant batch stream.
inline VerifyReport verify_algorithm1() {
  VerifyReport r;
  const std::string scope = "algorithm1";
  {
    ShadeState s({1});
    s.update(0, Tensor({1, 1}, 0.0));
    const auto& u = s.unit(0, 0);
    const double err = std::max({std::abs(u.p0 - 0.6), std::abs(u.p1 - 0.4), std::abs(u.mu0 + 0.8),
                                 std::abs(u.mu1 - 0.8)});
    r.add(scope, "single_sample_step", err, 1e-12, err <= 1e-12);
  }
  {
    const std::vector<double> batch{-0.7, -0.1, 0.0, 0.4, 1.3, 2.5};
    ShadeState s({1});
    const Tensor t({batch.size(), 1}, batch);
    for (int b = 0; b < 500; ++b) s.update(0, t);
    double m0 = 0.0, m1 = 0.0, m0y = 0.0, m1y = 0.0;
    for (double y : batch) {
      const auto post = posterior(y);
      m0 += post.p0;
      m1 += post.p1;
      m0y += post.p0 * y;
      m1y += post.p1 * y;
    }
    const double k = static_cast<double>(batch.size());
    const auto& u = s.unit(0, 0);
    const double err = std::max({std::abs(u.p0 - m0 / k), std::abs(u.p1 - m1 / k),
                                 std::abs(u.mu0 - m0y / m0), std::abs(u.mu1 - m1y / m1)});
    r.add(scope, "constant_stream_fixed_point", err, 1e-6, err <= 1e-6);
  }
  {
    // All samples negative: p1 never leaves the prior's decay path and mu1
    // is frozen once p1 underflows the guard.
    ShadeState s({1});
    const Tensor t({4, 1}, std::vector<double>{-1.0, -2.0, -3.0, -4.0});
    for (int b = 0; b < 200; ++b) s.update(0, t);
    const auto& u = s.unit(0, 0);
    const bool finite = std::isfinite(u.mu1) && std::isfinite(u.mu0);
    r.add(scope, "vanishing_prior_guard", finite ? std::abs(u.mu0 + 2.5) : INFINITY, 1e-6,
          finite && std::abs(u.mu0 + 2.5) <= 1e-6);
  }
  return r;
}

/// Analytic SHADE derivatives against central finite differences, per unit
/// and through whole networks.
inline VerifyReport verify_gradients(std::uint64_t seed = 1) {
  VerifyReport r;
  const std::string scope = "gradients";
  Rng rng(seed);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    double y = 0.0;
    do {
      y = rng.uniform(-3.0, 3.0);
    } while (std::abs(y) < 1e-3);
    const double mu0 = rng.uniform(-2.0, 0.5), mu1 = rng.uniform(-0.5, 2.0);
    const double h = 1e-5;
    const double numeric = (unit_loss(y + h, mu0, mu1) - unit_loss(y - h, mu0, mu1)) / (2.0 * h);
    worst = std::max(worst, detail::relative_error(unit_gradient(y, mu0, mu1).total(), numeric));
  }
  r.add(scope, "unit_relative_error_max", worst, 1e-6, worst < 1e-6);

  {
    Rng net_rng = rng.split();
    Network net = make_mlp(6, {5, 4}, 3);
    net.init(net_rng);
    detail::jitter_biases(net, net_rng);
    const Tensor x = rng_gaussian(net_rng, {8, 6}, 0.0, 1.0);
    const std::vector<int> labels{0, 1, 2, 0, 1, 2, 0, 1};
    const auto state = detail::random_state(net.units_per_layer(), net_rng);
    const double err = detail::network_gradient_error(net, state, 0.3, x, labels);
    r.add(scope, "mlp_relative_error", err, 1e-5, err < 1e-5);
  }
  {
    Rng net_rng = rng.split();
    Network net = make_convnet(1, 6, 6, {{2, 3, 1}}, 3, 0.0);
    net.init(net_rng);
    detail::jitter_biases(net, net_rng);
    const Tensor x = rng_gaussian(net_rng, {3, 1, 6, 6}, 0.0, 1.0);
    const std::vector<int> labels{2, 0, 1};
    const auto state = detail::random_state(net.units_per_layer(), net_rng);
    const double err = detail::network_gradient_error(net, state, 0.3, x, labels);
    r.add(scope, "convnet_relative_error", err, 1e-5, err < 1e-5);
  }
  return r;
}

/// Histogram entropy against the Gaussian variance bound at K = 1e5.
inline VerifyReport verify_bounds(std::uint64_t seed = 1, std::size_t k = 100000) {
  VerifyReport r;
  const std::string scope = "bounds";
  Rng rng(seed);
  std::vector<double> s(k);

  for (auto& v : s) v = rng.exponential(1.0);
  auto rep = info::variance_bound_check(s);
  const double exponential_gap = 0.5 * std::log(2.0 * std::numbers::pi / std::numbers::e);
  r.add(scope, "exponential_gap_error", std::abs(rep.gap - exponential_gap), 0.05,
        std::abs(rep.gap - exponential_gap) <= 0.05);

  for (auto& v : s) v = rng.uniform();
  rep = info::variance_bound_check(s);
  const double uniform_gap = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e / 12.0);
  r.add(scope, "uniform_gap_error", std::abs(rep.gap - uniform_gap), 0.05,
        std::abs(rep.gap - uniform_gap) <= 0.05);

  for (auto& v : s) v = rng.normal(0.5, 2.0);
  rep = info::variance_bound_check(s);
  r.add(scope, "gaussian_gap_abs", std::abs(rep.gap), 0.05, std::abs(rep.gap) <= 0.05);

  for (auto& v : s) v = rng.bernoulli(0.3) ? rng.normal(3.0, 0.5) : rng.normal(-1.0, 1.0);
  rep = info::variance_bound_check(s);
  r.add(scope, "bimodal_gap", rep.gap, -0.05, rep.ok(0.05));

  // Mode-conditional form with the latent-code posterior as soft assignment.
  std::vector<double> post(k);
  for (std::size_t i = 0; i < k; ++i) post[i] = posterior(s[i]).p1;
  rep = info::variance_bound_check(s, std::span<const double>(post));
  r.add(scope, "bimodal_mode_conditional_gap", rep.gap, -0.05, rep.ok(0.05));
  return r;
}

/// Exact conditional-entropy identities, the deterministic-chain inequality
/// and coordinate sub-additivity on random discrete instances.
inline VerifyReport verify_dpi_suite(std::uint64_t seed = 1, int instances = 100) {
  VerifyReport r;
  const std::string scope = "dpi";
  Rng rng(seed);
  auto random_map = [&](std::size_t from, std::size_t to) {
    std::vector<std::size_t> m(from);
    for (auto& v : m) v = rng.uniform_int(to);
    return m;
  };
  double chain = INFINITY, sub = INFINITY, decomp = 0.0;
  for (int n = 0; n < instances; ++n) {
    const std::size_t nc = 2 + rng.uniform_int(3);
    const std::size_t nx = 4 + rng.uniform_int(13);  // up to 16
    info::MarkovChainSpec spec;
    spec.p_c = info::DiscreteJoint::random({nc}, rng).probs();
    spec.c_to_x.rows = nc;
    spec.c_to_x.cols = nx;
    for (std::size_t c = 0; c < nc; ++c) {
      const auto row = info::DiscreteJoint::random({nx}, rng).probs();
      spec.c_to_x.p.insert(spec.c_to_x.p.end(), row.begin(), row.end());
    }
    // Three deterministic stages onto factorized spaces: 4x4, 2x4, 2x2.
    const std::vector<std::vector<std::size_t>> coords{{4, 4}, {2, 4}, {2, 2}};
    std::size_t prev = nx;
    for (const auto& cd : coords) {
      const std::size_t next = cd[0] * cd[1];
      spec.stages.push_back({info::Kernel::deterministic(random_map(prev, next), next), cd});
      prev = next;
    }
    const auto rep = info::verify_dpi(spec);
    chain = std::min(chain, rep.min_chain_slack);
    sub = std::min(sub, rep.min_subadditive_slack);

    const auto xc = info::DiscreteJoint::random({nx, nc}, rng);
    const std::size_t ny = 1 + rng.uniform_int(nx);
    const auto f = random_map(nx, ny);
    decomp = std::max(decomp, info::verify_decompositions(info::joint_with_function(xc, f, ny)).max_residual());
  }
  r.add(scope, "chain_min_slack", chain, -1e-12, chain >= -1e-12);
  r.add(scope, "subadditive_min_slack", sub, -1e-12, sub >= -1e-12);
  r.add(scope, "decomposition_max_residual", decomp, 1e-10, decomp <= 1e-10);
  return r;
}

/// Zero-one reconstruction bounds on random joints, exhaustive optimality of
/// the MAP reconstructor, and the Gaussian squared-error bound.
inline VerifyReport verify_reconstruction(std::uint64_t seed = 1) {
  VerifyReport r;
  const std::string scope = "reconstruction";
  Rng rng(seed);
  double lower = INFINITY, upper = INFINITY, jensen = INFINITY;
  for (int n = 0; n < 200; ++n) {
    const auto rep = info::reconstruction_bounds_discrete(info::DiscreteJoint::random({8, 8}, rng));
    lower = std::min(lower, rep.lower_slack);
    upper = std::min(upper, rep.upper_slack);
    jensen = std::min(jensen, rep.jensen_slack);
  }
  r.add(scope, "lower_bound_min_slack", lower, -1e-9, lower >= -1e-9);
  r.add(scope, "upper_bound_min_slack", upper, -1e-9, upper >= -1e-9);
  r.add(scope, "jensen_min_slack", jensen, -1e-9, jensen >= -1e-9);

  double map_excess = 0.0;
  std::size_t enumerated = 0;
  for (int n = 0; n < 20; ++n) {
    const auto rep = info::reconstruction_bounds_discrete(info::DiscreteJoint::random({4, 4}, rng));
    map_excess = std::max(map_excess, rep.error - rep.best_error);
    enumerated = rep.reconstructors_checked;
  }
  r.add(scope, "map_excess_over_exhaustive", map_excess, 1e-12, map_excess <= 1e-12 && enumerated == 256);

  for (const auto& [name, model] :
       {std::pair{"gaussian_independent", info::GaussianPair{0.0, 0.0, 2.0, 1.0, 0.0}},
        std::pair{"gaussian_additive_noise", info::GaussianPair::additive_noise(1.5, 0.5)}}) {
    const auto rep = info::reconstruction_bounds_continuous(model, model.sample(100000, rng));
    r.add(scope, std::string(name) + "_mse_relative_error", rep.relative_mse_error, 0.02, rep.ok(0.02));
  }
  return r;
}

/// Runs one scope, or all of them for "all".
inline VerifyReport run_verify(const std::string& scope, std::uint64_t seed = 1) {
  if (scope == "algorithm1") return verify_algorithm1();
  if (scope == "gradients") return verify_gradients(seed);
  if (scope == "bounds") return verify_bounds(seed);
  if (scope == "dpi") return verify_dpi_suite(seed);
  if (scope == "reconstruction") return verify_reconstruction(seed);
  if (scope == "all") {
    VerifyReport all;
    for (const auto& s : verify_scopes()) all.append(run_verify(s, seed));
    return all;
  }
  throw std::invalid_argument("verify: unknown scope '" + scope + "'");
}

}  // namespace shade::experiment

#endif  // SHADE_EXPERIMENT_VERIFY_HPP
