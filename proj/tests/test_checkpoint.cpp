#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "shade/checkpoint.hpp"

using namespace shade;

namespace {

Checkpoint sample_checkpoint() {
  Rng rng(1);
  Checkpoint c;
  c.network = make_convnet(1, 6, 6, {{3, 3, 1}}, 4, 0.25);
  c.network.init(rng);
  for (auto& p : c.network.all_parameters())
    for (auto& v : p.value->data()) v = rng.normal();
  ShadeState st({3}, 0.7);
  st.update(0, rng_gaussian(rng, {2, 3, 2, 2}, 0.3, 1.0));
  st.set_layer_weights({0.1 + 0.2});
  c.shade = st;
  c.metadata = {{"epochs_completed", 3}, {"note", "x"}};
  return c;
}

void expect_same(Checkpoint a, Checkpoint b) {
  auto pa = a.network.all_parameters(), pb = b.network.all_parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(*pa[i].value, *pb[i].value);
  EXPECT_EQ(a.network.frozen_through(), b.network.frozen_through());
  EXPECT_EQ(a.shade.has_value(), b.shade.has_value());
  if (a.shade) {
    EXPECT_TRUE(*a.shade == *b.shade);
  }
  EXPECT_EQ(a.metadata, b.metadata);
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto c = sample_checkpoint();
  const auto bytes = serialize_checkpoint(c);
  expect_same(c, deserialize_checkpoint(bytes));
  EXPECT_EQ(serialize_checkpoint(deserialize_checkpoint(bytes)), bytes);
}

TEST(Checkpoint, BinaryThresholdsAndFreezeSurvive) {
  Rng rng(2);
  Checkpoint c;
  c.network = make_mlp(3, {4}, 2);
  c.network.init(rng);
  binarize_layer(c.network, 0, rng_gaussian(rng, {50, 3}, 0.0, 1.0));
  const auto back = deserialize_checkpoint(serialize_checkpoint(c));
  EXPECT_EQ(std::get<BinaryActivation>(back.network.layer(1)).thresholds,
            std::get<BinaryActivation>(c.network.layer(1)).thresholds);
  EXPECT_EQ(back.network.frozen_through(), 2u);
  EXPECT_FALSE(back.shade.has_value());
}

TEST(Checkpoint, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "shade_test_checkpoint.bin";
  const auto c = sample_checkpoint();
  save_checkpoint(c, path);
  expect_same(c, load_checkpoint(path));
  EXPECT_FALSE(std::filesystem::exists(path.string() + ".tmp"));
  EXPECT_THROW(load_checkpoint(path.string() + ".missing"), std::runtime_error);
}

TEST(Checkpoint, TruncationReportsOffset) {
  auto bytes = serialize_checkpoint(sample_checkpoint());
  bytes.resize(bytes.size() - 5);
  try {
    deserialize_checkpoint(bytes);
    FAIL() << "expected throw";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("truncated at offset"), std::string::npos);
  }
}

TEST(Checkpoint, RejectsTrailingBytesBadMagicAndVersion) {
  auto bytes = serialize_checkpoint(sample_checkpoint());
  auto extra = bytes;
  extra.push_back('\0');
  EXPECT_THROW(deserialize_checkpoint(extra), std::runtime_error);
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(magic), std::runtime_error);
  auto version = bytes;
  version[8] = 9;
  EXPECT_THROW(deserialize_checkpoint(version), std::runtime_error);
}
