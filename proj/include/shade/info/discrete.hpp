#ifndef SHADE_INFO_DISCRETE_HPP
#define SHADE_INFO_DISCRETE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "shade/rng.hpp"

namespace shade::info {

inline constexpr double kLn2 = std::numbers::ln2;

inline double nats_to_bits(double nats) { return nats / kLn2; }
inline double bits_to_nats(double bits) { return bits * kLn2; }

namespace detail {

inline double entropy_unchecked(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

inline void validate_distribution(std::span<const double> p, double tol, const char* what) {
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw std::invalid_argument(std::string(what) + ": negative or NaN mass");
    total += v;
  }
  if (std::abs(total - 1.0) > tol) {
    throw std::invalid_argument(std::string(what) + ": mass sums to " + std::to_string(total));
  }
}

}  // namespace detail

/// Shannon entropy in nats, with 0 ln 0 = 0.
inline double discrete_entropy(std::span<const double> p) {
  detail::validate_distribution(p, 1e-9, "discrete_entropy");
  return detail::entropy_unchecked(p);
}

/// Probability table over a product of finite axes, row-major.
class DiscreteJoint {
 public:
  DiscreteJoint() = default;
  DiscreteJoint(std::vector<std::size_t> dims, std::vector<double> probs)
      : dims_(std::move(dims)), probs_(std::move(probs)) {
    std::size_t n = 1;
    for (std::size_t d : dims_) {
      if (d == 0) throw std::invalid_argument("joint: zero-sized axis");
      n *= d;
    }
    if (n != probs_.size()) {
      throw std::invalid_argument("joint: table has " + std::to_string(probs_.size()) +
                                  " entries, dims require " + std::to_string(n));
    }
    detail::validate_distribution(probs_, 1e-12, "joint");
  }

  /// Random joint with Dirichlet(1)-like weights (normalized exponentials).
  static DiscreteJoint random(std::vector<std::size_t> dims, Rng& rng) {
    std::size_t n = 1;
    for (std::size_t d : dims) n *= d;
    std::vector<double> p(n);
    for (auto& v : p) v = rng.exponential();
    return DiscreteJoint(std::move(dims), normalize(std::move(p)));
  }

  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t rank() const { return dims_.size(); }
  const std::vector<double>& probs() const { return probs_; }

  double operator()(std::span<const std::size_t> index) const { return probs_[flat(index)]; }

  std::size_t flat(std::span<const std::size_t> index) const {
    std::size_t f = 0;
    for (std::size_t a = 0; a < dims_.size(); ++a) f = f * dims_[a] + index[a];
    return f;
  }

  std::vector<std::size_t> unflat(std::size_t f) const {
    std::vector<std::size_t> idx(dims_.size());
    for (std::size_t a = dims_.size(); a-- > 0;) {
      idx[a] = f % dims_[a];
      f /= dims_[a];
    }
    return idx;
  }

  /// Marginal over `axes`, in the order given.
  DiscreteJoint marginal(const std::vector<std::size_t>& axes) const {
    std::vector<std::size_t> mdims;
    for (std::size_t a : axes) mdims.push_back(dims_.at(a));
    std::size_t n = 1;
    for (std::size_t d : mdims) n *= d;
    std::vector<double> m(n, 0.0);
    for (std::size_t f = 0; f < probs_.size(); ++f) {
      const auto idx = unflat(f);
      std::size_t mf = 0;
      for (std::size_t j = 0; j < axes.size(); ++j) mf = mf * mdims[j] + idx[axes[j]];
      m[mf] += probs_[f];
    }
    DiscreteJoint out;
    out.dims_ = std::move(mdims);
    out.probs_ = std::move(m);
    return out;
  }

  /// Joint entropy (nats) of the variables on `axes`.
  double entropy(const std::vector<std::size_t>& axes) const {
    return detail::entropy_unchecked(marginal(axes).probs_);
  }

  double entropy() const { return detail::entropy_unchecked(probs_); }

  static std::vector<double> normalize(std::vector<double> p) {
    double total = 0.0;
    for (double v : p) total += v;
    for (double& v : p) v /= total;
    return p;
  }

 private:
  std::vector<std::size_t> dims_;
  std::vector<double> probs_;
};

/// H(target | given) = sum_g p(g) H(target | given = g), in nats, evaluated
/// directly from the conditional distributions.
inline double conditional_entropy(const DiscreteJoint& joint,
                                  const std::vector<std::size_t>& target,
                                  const std::vector<std::size_t>& given) {
  std::vector<std::size_t> axes = given;
  axes.insert(axes.end(), target.begin(), target.end());
  const DiscreteJoint m = joint.marginal(axes);
  std::size_t n_given = 1, n_target = 1;
  for (std::size_t a : given) n_given *= joint.dims().at(a);
  for (std::size_t a : target) n_target *= joint.dims().at(a);
  double h = 0.0;
  std::vector<double> cond(n_target);
  for (std::size_t g = 0; g < n_given; ++g) {
    double pg = 0.0;
    for (std::size_t t = 0; t < n_target; ++t) pg += m.probs()[g * n_target + t];
    if (pg <= 0.0) continue;
    for (std::size_t t = 0; t < n_target; ++t) cond[t] = m.probs()[g * n_target + t] / pg;
    h += pg * detail::entropy_unchecked(cond);
  }
  return h;
}

/// Two-axis convenience: H(other axis | axis `given`).
inline double conditional_entropy(const DiscreteJoint& joint, std::size_t given) {
  if (joint.rank() != 2 || given > 1) {
    throw std::invalid_argument("conditional_entropy: expected a 2-axis joint");
  }
  return conditional_entropy(joint, {1 - given}, {given});
}

inline double mutual_information(const DiscreteJoint& joint, const std::vector<std::size_t>& a,
                                 const std::vector<std::size_t>& b) {
  return joint.entropy(a) - conditional_entropy(joint, a, b);
}

/// Joint over (X, Y, C) built from p(x, c) and a deterministic map y = f(x).
inline DiscreteJoint joint_with_function(const DiscreteJoint& xc, std::span<const std::size_t> f,
                                         std::size_t y_size) {
  if (xc.rank() != 2 || f.size() != xc.dims()[0]) {
    throw std::invalid_argument("joint_with_function: f must map every x");
  }
  const std::size_t nx = xc.dims()[0], nc = xc.dims()[1];
  std::vector<double> p(nx * y_size * nc, 0.0);
  for (std::size_t x = 0; x < nx; ++x) {
    if (f[x] >= y_size) throw std::invalid_argument("joint_with_function: f(x) out of range");
    for (std::size_t c = 0; c < nc; ++c) p[(x * y_size + f[x]) * nc + c] = xc.probs()[x * nc + c];
  }
  return DiscreteJoint({nx, y_size, nc}, std::move(p));
}

struct DecompositionReport {
  double h_x = 0, h_y = 0, h_y_given_x = 0, h_x_given_y = 0;
  double i_xy = 0, i_cy = 0, h_y_given_c = 0, h_x_given_c = 0, h_x_given_yc = 0;
  // Residuals of the identities checked.
  double res_deterministic = 0;  // H(Y|X)
  double res_mutual = 0;         // H(Y) - (H(X) - H(X|Y))
  double res_class_split = 0;    // H(Y) - (I(C,Y) + H(Y|C))
  double res_conditional = 0;    // H(Y|C) - (H(X|C) - H(X|Y,C))

  double max_residual() const {
    return std::max({std::abs(res_deterministic), std::abs(res_mutual),
                     std::abs(res_class_split), std::abs(res_conditional)});
  }
  bool ok(double tol = 1e-10) const { return max_residual() <= tol; }
};

/// Checks the entropy decompositions of a deterministic representation
/// Y = f(X) with a class variable C, on a joint over axes (X, Y, C).
inline DecompositionReport verify_decompositions(const DiscreteJoint& xyc, double tol = 1e-10) {
  if (xyc.rank() != 3) throw std::invalid_argument("verify_decompositions: need axes (X, Y, C)");
  constexpr std::size_t X = 0, Y = 1, C = 2;
  DecompositionReport r;
  r.h_y_given_x = conditional_entropy(xyc, {Y}, {X});
  if (r.h_y_given_x > tol) {
    throw std::invalid_argument("verify_decompositions: Y is not a deterministic function of X "
                                "(H(Y|X) = " + std::to_string(r.h_y_given_x) + ")");
  }
  r.h_x = xyc.entropy({X});
  r.h_y = xyc.entropy({Y});
  r.h_x_given_y = conditional_entropy(xyc, {X}, {Y});
  r.i_xy = r.h_y - r.h_y_given_x;
  r.h_y_given_c = conditional_entropy(xyc, {Y}, {C});
  r.i_cy = r.h_y - r.h_y_given_c;
  r.h_x_given_c = conditional_entropy(xyc, {X}, {C});
  r.h_x_given_yc = conditional_entropy(xyc, {X}, {Y, C});
  // Independent routes: I(C,Y) via H(C) - H(C|Y) rather than the definition above.
  const double i_cy_alt = xyc.entropy({C}) - conditional_entropy(xyc, {C}, {Y});
  r.res_deterministic = r.h_y_given_x;
  r.res_mutual = r.h_y - (r.h_x - r.h_x_given_y);
  r.res_class_split = r.h_y - (i_cy_alt + r.h_y_given_c);
  r.res_conditional = r.h_y_given_c - (r.h_x_given_c - r.h_x_given_yc);
  return r;
}

/// Row-stochastic transition matrix between finite state spaces.
struct Kernel {
  std::size_t rows = 0, cols = 0;
  std::vector<double> p;  // rows x cols

  static Kernel deterministic(std::span<const std::size_t> map, std::size_t cols) {
    Kernel k{map.size(), cols, std::vector<double>(map.size() * cols, 0.0)};
    for (std::size_t i = 0; i < map.size(); ++i) {
      if (map[i] >= cols) throw std::invalid_argument("kernel: map target out of range");
      k.p[i * cols + map[i]] = 1.0;
    }
    return k;
  }

  bool is_deterministic() const {
    for (std::size_t i = 0; i < rows; ++i) {
      std::size_t nonzero = 0;
      for (std::size_t j = 0; j < cols; ++j) nonzero += p[i * cols + j] > 0.0;
      if (nonzero != 1) return false;
    }
    return true;
  }

  void validate(const char* what) const {
    if (p.size() != rows * cols) throw std::invalid_argument(std::string(what) + ": bad size");
    for (std::size_t i = 0; i < rows; ++i) {
      detail::validate_distribution(std::span<const double>(p).subspan(i * cols, cols), 1e-9,
                                    what);
    }
  }
};

struct ChainStage {
  Kernel kernel;
  /// Extents of the vector coordinates the stage output decomposes into
  /// (row-major); empty means a single coordinate.
  std::vector<std::size_t> coordinates;
};

/// C -> X -> Y1 -> Y2 -> ... with each arrow a kernel.
struct MarkovChainSpec {
  std::vector<double> p_c;
  Kernel c_to_x;
  std::vector<ChainStage> stages;
};

struct DpiReport {
  /// H(X|C), H(Y1|C), ... in nats.
  std::vector<double> conditional_entropies;
  /// H(Y_j|C) per coordinate summed, per stage (equals the joint value for
  /// single-coordinate stages).
  std::vector<double> coordinate_sums;
  double min_chain_slack = 0.0;        // min over deterministic steps of H(prev|C) - H(next|C)
  double min_subadditive_slack = 0.0;  // min over stages of sum_i H(Y_i|C) - H(Y|C)
  bool ok(double tol = 1e-12) const {
    return min_chain_slack >= -tol && min_subadditive_slack >= -tol;
  }
};

/// Propagates the chain exactly and checks that conditional entropy never
/// increases through deterministic stages and that it is sub-additive over
/// output coordinates.
inline DpiReport verify_dpi(const MarkovChainSpec& chain) {
  detail::validate_distribution(chain.p_c, 1e-9, "dpi: p(c)");
  chain.c_to_x.validate("dpi: C->X kernel");
  const std::size_t nc = chain.p_c.size();
  if (chain.c_to_x.rows != nc) throw std::invalid_argument("dpi: C->X kernel rows != |C|");

  // joint p(c, s) for the current stage
  std::size_t ns = chain.c_to_x.cols;
  std::vector<double> joint(nc * ns);
  for (std::size_t c = 0; c < nc; ++c) {
    for (std::size_t s = 0; s < ns; ++s) joint[c * ns + s] = chain.p_c[c] * chain.c_to_x.p[c * ns + s];
  }
  auto cond_entropy = [&](const std::vector<double>& j, std::size_t n) {
    return conditional_entropy(DiscreteJoint({nc, n}, DiscreteJoint::normalize(j)), {1}, {0});
  };

  DpiReport r;
  r.conditional_entropies.push_back(cond_entropy(joint, ns));
  r.coordinate_sums.push_back(r.conditional_entropies.back());
  r.min_chain_slack = INFINITY;
  r.min_subadditive_slack = INFINITY;
  for (std::size_t k = 0; k < chain.stages.size(); ++k) {
    const auto& st = chain.stages[k];
    st.kernel.validate("dpi: stage kernel");
    if (st.kernel.rows != ns) {
      throw std::invalid_argument("dpi: stage " + std::to_string(k) + " expects " +
                                  std::to_string(st.kernel.rows) + " input states, previous stage has " +
                                  std::to_string(ns));
    }
    const std::size_t nn = st.kernel.cols;
    std::vector<double> next(nc * nn, 0.0);
    for (std::size_t c = 0; c < nc; ++c) {
      for (std::size_t s = 0; s < ns; ++s) {
        const double w = joint[c * ns + s];
        if (w == 0.0) continue;
        for (std::size_t t = 0; t < nn; ++t) next[c * nn + t] += w * st.kernel.p[s * nn + t];
      }
    }
    const double h = cond_entropy(next, nn);
    if (st.kernel.is_deterministic()) {
      r.min_chain_slack = std::min(r.min_chain_slack, r.conditional_entropies.back() - h);
    }
    r.conditional_entropies.push_back(h);

    std::vector<std::size_t> coords = st.coordinates.empty() ? std::vector<std::size_t>{nn}
                                                             : st.coordinates;
    std::size_t prod = 1;
    for (std::size_t e : coords) prod *= e;
    if (prod != nn) {
      throw std::invalid_argument("dpi: stage " + std::to_string(k) +
                                  " coordinate extents do not multiply to its state count");
    }
    std::vector<std::size_t> dims{nc};
    dims.insert(dims.end(), coords.begin(), coords.end());
    const DiscreteJoint full(dims, DiscreteJoint::normalize(next));
    double sum = 0.0;
    for (std::size_t i = 0; i < coords.size(); ++i) {
      sum += conditional_entropy(full, {i + 1}, {0});
    }
    r.coordinate_sums.push_back(sum);
    r.min_subadditive_slack = std::min(r.min_subadditive_slack, sum - h);

    joint = std::move(next);
    ns = nn;
  }
  if (r.min_chain_slack == INFINITY) r.min_chain_slack = 0.0;
  if (r.min_subadditive_slack == INFINITY) r.min_subadditive_slack = 0.0;
  return r;
}

}  // namespace shade::info

#endif  // SHADE_INFO_DISCRETE_HPP
