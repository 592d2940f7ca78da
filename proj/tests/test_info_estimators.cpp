#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "shade/info/estimators.hpp"
#include "shade/rng.hpp"

using namespace shade;
using namespace shade::info;

namespace {

std::vector<double> draw(std::size_t n, Rng& rng, double (*f)(Rng&)) {
  std::vector<double> v(n);
  for (auto& x : v) x = f(rng);
  return v;
}

}  // namespace

TEST(GaussianEntropy, ClosedForm) {
  EXPECT_NEAR(gaussian_entropy(1.0), 1.4189385332046727, 1e-15);
  EXPECT_NEAR(gaussian_entropy(4.0) - gaussian_entropy(1.0), std::log(2.0), 1e-15);
}

TEST(BinSpec, EdgesAndClamping) {
  const BinSpec s{0.0, 1.0, 4};
  EXPECT_EQ(s.index(0.0), 0u);
  EXPECT_EQ(s.index(0.25), 1u);
  EXPECT_EQ(s.index(0.9999), 3u);
  EXPECT_EQ(s.index(1.0), 3u);
  EXPECT_EQ(s.index(-3.0), 0u);
  EXPECT_DOUBLE_EQ(s.width(), 0.25);
  EXPECT_TRUE((BinSpec{2.0, 2.0, 4}).degenerate());
}

TEST(HistogramEntropy, HandCountedTable) {
  // Counts {2, 1, 1, 0} over four bins of width 0.25.
  const std::vector<double> xs{0.1, 0.2, 0.3, 0.6};
  const auto e = histogram_entropy(xs, BinSpec{0.0, 1.0, 4});
  const double h = -(0.5 * std::log(0.5) + 2 * 0.25 * std::log(0.25));
  EXPECT_NEAR(e.value, h, 1e-15);
  EXPECT_NEAR(e.differential, h + std::log(0.25), 1e-15);
  EXPECT_EQ(e.occupied, 3u);
  const auto mm = histogram_entropy(xs, BinSpec{0.0, 1.0, 4}, std::nullopt, true);
  EXPECT_NEAR(mm.value - e.value, 2.0 / 8.0, 1e-15);
}

TEST(HistogramEntropy, IntegerWeightsEqualRepetition) {
  const std::vector<double> xs{0.1, 0.5, 0.9}, w{3.0, 1.0, 2.0};
  const std::vector<double> rep{0.1, 0.1, 0.1, 0.5, 0.9, 0.9};
  const BinSpec s{0.0, 1.0, 8};
  EXPECT_NEAR(histogram_entropy(xs, s, std::span<const double>(w)).value,
              histogram_entropy(rep, s).value, 1e-15);
}

TEST(SampleEntropy, UniformOnUnitIntervalIsNearZero) {
  Rng rng(1);
  const auto xs = draw(200000, rng, [](Rng& r) { return r.uniform(); });
  EXPECT_NEAR(sample_entropy(xs).differential, 0.0, 0.01);
}

TEST(SampleEntropy, GaussianMatchesClosedForm) {
  Rng rng(2);
  const auto xs = draw(200000, rng, [](Rng& r) { return r.normal(0.0, 2.0); });
  EXPECT_NEAR(sample_entropy(xs).differential, gaussian_entropy(4.0), 0.02);
}

TEST(SampleEntropy, RejectsTooFewSamplesAndFlagsDegenerate) {
  EXPECT_THROW(sample_entropy(std::vector<double>{1.0}), std::invalid_argument);
  EXPECT_THROW(sample_entropy(std::vector<double>{1.0, 2.0}, 0), std::invalid_argument);
  EXPECT_TRUE(sample_entropy(std::vector<double>{3.0, 3.0, 3.0}).degenerate);
}

TEST(VarianceBound, ExponentialGap) {
  Rng rng(3);
  const auto xs = draw(100000, rng, [](Rng& r) { return r.exponential(); });
  const auto r = variance_bound_check(xs);
  EXPECT_NEAR(r.gap, 0.5 * std::log(2.0 * std::numbers::pi / std::numbers::e), 0.03);
  EXPECT_TRUE(r.ok());
}

TEST(VarianceBound, UniformGap) {
  Rng rng(4);
  const auto xs = draw(100000, rng, [](Rng& r) { return r.uniform(-1.0, 3.0); });
  EXPECT_NEAR(variance_bound_check(xs).gap,
              0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e / 12.0), 0.02);
}

TEST(VarianceBound, GapIsNonNegativeAcrossFamilies) {
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> xs(20000);
    for (auto& x : xs) {
      switch (t % 4) {
        case 0: x = rng.normal(1.0, 0.5 + t); break;
        case 1: x = rng.exponential(0.5 + t); break;
        case 2: x = rng.uniform(-t - 1.0, 1.0); break;
        default: x = rng.bernoulli(0.3) ? rng.normal(-3, 0.5) : rng.normal(2, 1);
      }
    }
    EXPECT_TRUE(variance_bound_check(xs).ok()) << t;
  }
}

TEST(VarianceBound, ModeConditionalUsesPosteriorWeights) {
  Rng rng(6);
  std::vector<double> xs(50000), post(50000);
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const bool one = rng.bernoulli(0.4);
    xs[k] = one ? rng.normal(4.0, 0.5) : rng.normal(-4.0, 1.0);
    post[k] = one ? 1.0 : 0.0;
  }
  const auto r = variance_bound_check(xs, std::span<const double>(post));
  EXPECT_NEAR(r.variance, 0.4 * 0.25 + 0.6 * 1.0, 0.02);
  EXPECT_NEAR(r.gap, 0.0, 0.03);
  // Conditioning on the mode removes the between-mode spread.
  EXPECT_LT(r.entropy, variance_bound_check(xs).entropy);
}

TEST(VarianceBound, DegenerateAndMismatchedInputs) {
  EXPECT_TRUE(variance_bound_check(std::vector<double>{2.0, 2.0}).degenerate);
  EXPECT_THROW(variance_bound_check(std::vector<double>{1.0, 2.0}, std::vector<double>{1.0}),
               std::invalid_argument);
}
