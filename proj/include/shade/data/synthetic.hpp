#ifndef SHADE_DATA_SYNTHETIC_HPP
#define SHADE_DATA_SYNTHETIC_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "shade/data/dataset.hpp"
#include "shade/rng.hpp"

namespace shade::data {

enum class SyntheticKind { GaussianBlobs, TexturedDigitsProxy };

inline SyntheticKind parse_synthetic_kind(const std::string& s) {
  if (s == "gaussian-blobs") return SyntheticKind::GaussianBlobs;
  if (s == "textured-digits-proxy") return SyntheticKind::TexturedDigitsProxy;
  throw std::invalid_argument("unknown synthetic dataset '" + s + "'");
}

inline std::string to_string(SyntheticKind k) {
  return k == SyntheticKind::GaussianBlobs ? "gaussian-blobs" : "textured-digits-proxy";
}

/// Generator description. Everything that must be shared between the
/// train/val/test draws (class prototypes, texture basis) comes from
/// structure_seed; the per-draw seed only drives sampling.
struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::TexturedDigitsProxy;
  std::size_t classes = 10;
  std::size_t signal_dims = 16;
  long nuisance_dims = 256;
  double separation = 1.0;      // scale of the class prototypes
  double signal_noise = 1.0;    // within-class noise on signal coordinates
  double nuisance_scale = 1.5;  // std of nuisance coordinates
  std::size_t texture_rank = 8; // smooth texture components (textured proxy)
  std::uint64_t structure_seed = 1;

  std::size_t input_dim() const {
    return signal_dims + static_cast<std::size_t>(nuisance_dims < 0 ? 0 : nuisance_dims);
  }
};

/// Balanced class-conditional samples; rows are [signal | nuisance].
///
/// gaussian-blobs: signal = separation * m_c + noise, nuisance i.i.d. normal.
/// textured-digits-proxy: the class prototype lives in the signal
/// coordinates; the nuisance coordinates carry a class-independent texture
/// (random combination of smooth fixed patterns plus white noise) whose
/// variance dominates the signal.
inline Dataset make_synthetic(const SyntheticSpec& spec, std::size_t n, std::uint64_t seed,
                              Split split = Split::Train) {
  if (spec.nuisance_dims < 0) throw std::invalid_argument("synthetic: nuisance-dims < 0");
  if (spec.classes == 0) throw std::invalid_argument("synthetic: zero classes");
  if (n % spec.classes != 0) {
    throw std::invalid_argument("synthetic: N=" + std::to_string(n) +
                                " is not a multiple of the class count");
  }
  const std::size_t sd = spec.signal_dims;
  const auto nd = static_cast<std::size_t>(spec.nuisance_dims);
  const std::size_t dim = sd + nd;

  Rng structure(spec.structure_seed);
  std::vector<double> prototypes(spec.classes * sd);
  for (auto& v : prototypes) v = structure.normal();
  // Smooth texture patterns: low-frequency sinusoids over the nuisance block.
  std::vector<double> basis(spec.texture_rank * nd);
  for (std::size_t r = 0; r < spec.texture_rank; ++r) {
    const double freq = structure.uniform(0.5, 3.0);
    const double phase = structure.uniform(0.0, 2.0 * std::numbers::pi);
    double norm = 0.0;
    for (std::size_t j = 0; j < nd; ++j) {
      const double t = static_cast<double>(j) / static_cast<double>(nd ? nd : 1);
      basis[r * nd + j] = std::sin(2.0 * std::numbers::pi * freq * t + phase);
      norm += basis[r * nd + j] * basis[r * nd + j];
    }
    // unit average power per coordinate
    const double s = norm > 0.0 ? std::sqrt(static_cast<double>(nd) / norm) : 0.0;
    for (std::size_t j = 0; j < nd; ++j) basis[r * nd + j] *= s;
  }

  Rng rng(seed);
  Dataset d;
  d.inputs = Tensor({n, dim});
  d.labels.resize(n);
  d.num_classes = spec.classes;
  d.split = split;
  std::vector<double> coef(spec.texture_rank);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::size_t>(i % spec.classes);
    d.labels[i] = static_cast<int>(c);
    auto row = d.inputs.row(i);
    for (std::size_t j = 0; j < sd; ++j) {
      row[j] = spec.separation * prototypes[c * sd + j] + spec.signal_noise * rng.normal();
    }
    if (spec.kind == SyntheticKind::GaussianBlobs || spec.texture_rank == 0) {
      for (std::size_t j = 0; j < nd; ++j) row[sd + j] = spec.nuisance_scale * rng.normal();
    } else {
      // Texture carries 3/4 of the nuisance variance, white noise the rest.
      const double tex_sd = spec.nuisance_scale * std::sqrt(0.75 / static_cast<double>(spec.texture_rank));
      const double white_sd = spec.nuisance_scale * 0.5;
      for (auto& a : coef) a = tex_sd * rng.normal();
      for (std::size_t j = 0; j < nd; ++j) {
        double v = white_sd * rng.normal();
        for (std::size_t r = 0; r < spec.texture_rank; ++r) v += coef[r] * basis[r * nd + j];
        row[sd + j] = v;
      }
    }
  }
  return d;
}

/// Permutes the signal block across rows, destroying its relation to the
/// labels while keeping its marginal distribution.
inline Dataset decorrelate_signal(const Dataset& d, std::size_t signal_dims, Rng& rng) {
  Dataset out = d;
  const auto perm = rng.permutation(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    auto dst = out.inputs.row(i);
    const auto src = d.inputs.row(perm[i]);
    for (std::size_t j = 0; j < signal_dims; ++j) dst[j] = src[j];
  }
  return out;
}

}  // namespace shade::data

#endif  // SHADE_DATA_SYNTHETIC_HPP
