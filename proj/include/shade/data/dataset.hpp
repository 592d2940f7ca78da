#ifndef SHADE_DATA_DATASET_HPP
#define SHADE_DATA_DATASET_HPP

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <iostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "shade/rng.hpp"
#include "shade/tensor.hpp"

namespace shade::data {

enum class Split { Train, Val, Test };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

/// Inputs [N x ...] with one class label per row.
struct Dataset {
  Tensor inputs;
  std::vector<int> labels;
  std::size_t num_classes = 0;
  Split split = Split::Train;

  std::size_t size() const { return labels.size(); }

  void validate() const {
    if (inputs.rows() != labels.size()) {
      throw std::invalid_argument("dataset: " + std::to_string(inputs.rows()) + " inputs but " +
                                  std::to_string(labels.size()) + " labels");
    }
    for (int l : labels) {
      if (l < 0 || static_cast<std::size_t>(l) >= num_classes) {
        throw std::invalid_argument("dataset: label " + std::to_string(l) + " outside [0, " +
                                    std::to_string(num_classes) + ")");
      }
    }
  }

  Shape sample_shape() const { return Shape(inputs.shape().begin() + 1, inputs.shape().end()); }

  /// Rows `idx` in the given order.
  Dataset gather(std::span<const std::size_t> idx) const {
    Dataset out;
    Shape shape = inputs.shape();
    shape[0] = idx.size();
    out.inputs = Tensor(shape);
    const std::size_t row = inputs.row_size();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto src = inputs.row(idx[i]);
      std::copy(src.begin(), src.end(), out.inputs.data().begin() + static_cast<std::ptrdiff_t>(i * row));
      out.labels.push_back(labels[idx[i]]);
    }
    out.num_classes = num_classes;
    out.split = split;
    return out;
  }

  /// Same data viewed as [N x D].
  Dataset flattened() const {
    Dataset out = *this;
    out.inputs = inputs.reshaped({inputs.rows(), inputs.row_size()});
    return out;
  }

  /// Same data viewed as [N x shape...].
  Dataset reshaped(const Shape& sample) const {
    Dataset out = *this;
    Shape s{inputs.rows()};
    s.insert(s.end(), sample.begin(), sample.end());
    out.inputs = inputs.reshaped(s);
    return out;
  }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(num_classes, 0);
    for (int l : labels) ++counts[static_cast<std::size_t>(l)];
    return counts;
  }
};

/// FNV-1a over the raw input bytes and labels.
inline std::uint64_t content_hash(const Dataset& d) {
  std::uint64_t h = 1469598103934665603ULL;
  auto feed = [&](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  feed(d.inputs.data().data(), d.inputs.size() * sizeof(double));
  for (int l : d.labels) {
    const auto v = static_cast<std::int32_t>(l);
    feed(&v, sizeof v);
  }
  return h;
}

struct SubsetSpec {
  std::size_t size = 0;  // N, a multiple of the class count
  std::uint64_t seed = 0;
};

/// Indices of a class-balanced subset of size spec.size. Each class's
/// indices are permuted once from the seed and the first N/|C| are kept, so
/// subsets for increasing N under one seed are nested. Returned sorted.
inline std::vector<std::size_t> stratified_subset_indices(const Dataset& d, const SubsetSpec& spec) {
  if (d.num_classes == 0) throw std::invalid_argument("subset: dataset has no classes");
  if (spec.size > d.size()) {
    throw std::invalid_argument("subset: N=" + std::to_string(spec.size) + " exceeds dataset size " +
                                std::to_string(d.size()));
  }
  if (spec.size % d.num_classes != 0) {
    throw std::invalid_argument("subset: N=" + std::to_string(spec.size) +
                                " is not a multiple of the class count " +
                                std::to_string(d.num_classes));
  }
  const std::size_t per_class = spec.size / d.num_classes;
  std::vector<std::vector<std::size_t>> by_class(d.num_classes);
  for (std::size_t i = 0; i < d.size(); ++i) by_class[static_cast<std::size_t>(d.labels[i])].push_back(i);
  Rng rng(spec.seed);
  std::vector<std::size_t> out;
  out.reserve(spec.size);
  for (std::size_t c = 0; c < d.num_classes; ++c) {
    auto& members = by_class[c];
    // Always draw the permutation so later classes see the same stream for any N.
    rng.shuffle(members);
    if (members.size() < per_class) {
      throw std::invalid_argument("subset: class " + std::to_string(c) + " has " +
                                  std::to_string(members.size()) + " samples, need " +
                                  std::to_string(per_class));
    }
    out.insert(out.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(per_class));
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline Dataset stratified_subset(const Dataset& d, const SubsetSpec& spec) {
  return d.gather(stratified_subset_indices(d, spec));
}

/// Seeded mini-batch schedule. Each epoch is a fresh permutation (when
/// shuffling) and the final short batch is kept.
class BatchIterator {
 public:
  BatchIterator(std::size_t n, std::size_t batch_size, bool shuffle = true)
      : n_(n), batch_(batch_size), shuffle_(shuffle) {
    if (batch_size == 0) throw std::invalid_argument("batches: batch size must be >= 1");
    if (batch_size > n && n > 0) {
      std::cerr << "warning: batch size " << batch_size << " exceeds dataset size " << n
                << ", using one batch of " << n << "\n";
      batch_ = n;
      clamped_ = true;
    }
  }

  bool clamped() const { return clamped_; }
  std::size_t batch_size() const { return batch_; }

  std::vector<std::vector<std::size_t>> epoch(Rng& rng) const {
    std::vector<std::size_t> order(n_);
    for (std::size_t i = 0; i < n_; ++i) order[i] = i;
    if (shuffle_) rng.shuffle(order);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n_; start += batch_) {
      const std::size_t end = std::min(n_, start + batch_);
      batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                           order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
  }

 private:
  std::size_t n_;
  std::size_t batch_;
  bool shuffle_;
  bool clamped_ = false;
};

}  // namespace shade::data

#endif  // SHADE_DATA_DATASET_HPP
