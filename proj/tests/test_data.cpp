#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "shade/data/dataset.hpp"
#include "shade/data/idx.hpp"
#include "shade/data/synthetic.hpp"

using namespace shade;
using namespace shade::data;

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "shade_test_data";
  fs::create_directories(dir);
  return dir / name;
}

Dataset labelled(std::size_t n, std::size_t classes) {
  Dataset d;
  d.inputs = Tensor({n, 2});
  d.num_classes = classes;
  for (std::size_t i = 0; i < n; ++i) {
    d.labels.push_back(static_cast<int>((i * 7) % classes));
    d.inputs(i, 0) = static_cast<double>(i);
  }
  return d;
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& b) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

}  // namespace

TEST(Idx, RoundTripQuantizesToBytes) {
  Dataset d;
  d.inputs = Tensor({3, 1, 2, 2});
  d.num_classes = 3;
  d.labels = {0, 2, 1};
  for (std::size_t i = 0; i < 12; ++i) d.inputs[i] = byte_to_value(static_cast<std::uint8_t>(i * 20));
  const auto img = scratch("rt-images.idx"), lab = scratch("rt-labels.idx");
  write_idx(d, img, lab);
  EXPECT_EQ(fs::file_size(img), 16u + 12u);
  EXPECT_EQ(fs::file_size(lab), 8u + 3u);
  const auto back = load_idx(img, lab);
  EXPECT_EQ(back.labels, d.labels);
  EXPECT_EQ(back.num_classes, 3u);
  EXPECT_EQ(back.inputs.shape(), (Shape{3, 1, 2, 2}));
  for (std::size_t i = 0; i < 12; ++i) EXPECT_DOUBLE_EQ(back.inputs[i], d.inputs[i]);
}

TEST(Idx, ByteMappingEndpoints) {
  EXPECT_DOUBLE_EQ(byte_to_value(0), -1.0);
  EXPECT_DOUBLE_EQ(byte_to_value(255), 1.0);
  EXPECT_EQ(value_to_byte(5.0), 255);
  EXPECT_EQ(value_to_byte(-5.0), 0);
  for (int b = 0; b < 256; ++b) EXPECT_EQ(value_to_byte(byte_to_value(static_cast<std::uint8_t>(b))), b);
}

TEST(Idx, BadMagicNamesOffset) {
  const auto img = scratch("bad-images.idx"), lab = scratch("bad-labels.idx");
  write_bytes(img, {0, 0, 8, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 7});
  write_bytes(lab, {0, 0, 8, 1, 0, 0, 0, 1, 0});
  try {
    load_idx(img, lab);
    FAIL() << "expected throw";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("offset 0"), std::string::npos) << e.what();
  }
}

TEST(Idx, TruncatedAndMismatchedFilesAreRejected) {
  const auto img = scratch("tr-images.idx"), lab = scratch("tr-labels.idx");
  write_bytes(img, {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2, 1, 2, 3});
  write_bytes(lab, {0, 0, 8, 1, 0, 0, 0, 2, 0, 1});
  EXPECT_THROW(load_idx(img, lab), std::runtime_error);
  write_bytes(lab, {0, 0, 8, 1, 0, 0, 0, 3, 0, 1, 1});
  EXPECT_THROW(load_idx(img, lab), std::runtime_error);
  EXPECT_THROW(load_idx(scratch("missing.idx"), lab), std::runtime_error);
}

TEST(Subset, BalancedNestedAndDeterministic) {
  const auto d = labelled(1000, 10);
  std::vector<std::size_t> prev;
  for (std::size_t n : {100u, 250u, 500u}) {
    const auto idx = stratified_subset_indices(d, {n, 42});
    EXPECT_EQ(idx.size(), n);
    EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end()));
    const auto counts = d.gather(idx).class_counts();
    for (auto c : counts) EXPECT_EQ(c, n / 10);
    EXPECT_TRUE(std::includes(idx.begin(), idx.end(), prev.begin(), prev.end()));
    prev = idx;
  }
  EXPECT_EQ(stratified_subset_indices(d, {250, 42}), stratified_subset_indices(d, {250, 42}));
  EXPECT_NE(stratified_subset_indices(d, {250, 42}), stratified_subset_indices(d, {250, 43}));
}

TEST(Subset, RejectsImpossibleRequests) {
  const auto d = labelled(100, 10);
  EXPECT_THROW(stratified_subset_indices(d, {105, 1}), std::invalid_argument);
  EXPECT_THROW(stratified_subset_indices(d, {200, 1}), std::invalid_argument);
  auto skewed = labelled(100, 10);
  for (auto& l : skewed.labels) l = l == 9 ? 0 : l;
  EXPECT_THROW(stratified_subset_indices(skewed, {100, 1}), std::invalid_argument);
}

TEST(Batches, CoverEveryIndexOncePerEpoch) {
  BatchIterator it(103, 10);
  Rng rng(1);
  const auto batches = it.epoch(rng);
  EXPECT_EQ(batches.size(), 11u);
  EXPECT_EQ(batches.back().size(), 3u);
  std::multiset<std::size_t> seen;
  for (const auto& b : batches) seen.insert(b.begin(), b.end());
  EXPECT_EQ(seen.size(), 103u);
  EXPECT_EQ(std::set<std::size_t>(seen.begin(), seen.end()).size(), 103u);
  EXPECT_NE(batches, it.epoch(rng));
}

TEST(Batches, OversizedBatchIsClamped) {
  BatchIterator it(5, 64, false);
  EXPECT_TRUE(it.clamped());
  Rng rng(1);
  const auto b = it.epoch(rng);
  ASSERT_EQ(b.size(), 1u);
  EXPECT_EQ(b[0], (std::vector<std::size_t>{0, 1, 2, 3, 4}));
  EXPECT_THROW(BatchIterator(5, 0), std::invalid_argument);
}

TEST(Synthetic, ShapesBalanceAndDeterminism) {
  SyntheticSpec s;
  s.signal_dims = 4;
  s.nuisance_dims = 12;
  const auto a = make_synthetic(s, 50, 9);
  EXPECT_EQ(a.inputs.shape(), (Shape{50, 16}));
  for (auto c : a.class_counts()) EXPECT_EQ(c, 5u);
  EXPECT_EQ(content_hash(a), content_hash(make_synthetic(s, 50, 9)));
  EXPECT_NE(content_hash(a), content_hash(make_synthetic(s, 50, 10)));
  EXPECT_THROW(make_synthetic(s, 55, 1), std::invalid_argument);
  s.nuisance_dims = -1;
  EXPECT_THROW(make_synthetic(s, 50, 1), std::invalid_argument);
}

TEST(Synthetic, SignalCarriesClassMeansNuisanceDoesNot) {
  SyntheticSpec s;
  s.kind = SyntheticKind::GaussianBlobs;
  s.classes = 2;
  s.signal_dims = 1;
  s.nuisance_dims = 1;
  s.separation = 3.0;
  const auto d = make_synthetic(s, 20000, 3);
  double m[2][2] = {};
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = 0; j < 2; ++j) m[d.labels[i]][j] += d.inputs(i, j) / 10000.0;
  EXPECT_GT(std::abs(m[0][0] - m[1][0]), 0.5);
  EXPECT_LT(std::abs(m[0][1] - m[1][1]), 0.1);
}

TEST(Synthetic, TextureNuisanceHasRequestedScale) {
  SyntheticSpec s;
  s.nuisance_dims = 64;
  const auto d = make_synthetic(s, 2000, 4);
  double acc = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = s.signal_dims; j < s.input_dim(); ++j) acc += d.inputs(i, j) * d.inputs(i, j);
  EXPECT_NEAR(std::sqrt(acc / (2000.0 * 64)), s.nuisance_scale, 0.1);
}

TEST(Synthetic, DecorrelateKeepsNuisanceAndMarginal) {
  SyntheticSpec s;
  s.signal_dims = 2;
  s.nuisance_dims = 3;
  const auto d = make_synthetic(s, 40, 1);
  Rng rng(2);
  const auto e = decorrelate_signal(d, 2, rng);
  std::multiset<double> a, b;
  for (std::size_t i = 0; i < 40; ++i) {
    a.insert(d.inputs(i, 0));
    b.insert(e.inputs(i, 0));
    EXPECT_EQ(d.inputs(i, 4), e.inputs(i, 4));
  }
  EXPECT_EQ(a, b);
}

TEST(Dataset, ValidateAndReshape) {
  auto d = labelled(4, 2);
  EXPECT_NO_THROW(d.validate());
  d.labels[0] = 2;
  EXPECT_THROW(d.validate(), std::invalid_argument);
  d.labels.pop_back();
  EXPECT_THROW(d.validate(), std::invalid_argument);
  const auto r = labelled(4, 2).reshaped({1, 2});
  EXPECT_EQ(r.inputs.shape(), (Shape{4, 1, 2}));
  EXPECT_EQ(r.flattened().inputs.shape(), (Shape{4, 2}));
}
