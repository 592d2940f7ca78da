#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <vector>

#include "shade/info/discrete.hpp"

using namespace shade;
using namespace shade::info;

namespace {

// H(A|B) = H(A,B) - H(B) via explicit marginal sums over a 2-D table.
double chain_rule_conditional(const std::vector<double>& pab, std::size_t na, std::size_t nb) {
  double hab = 0.0, hb = 0.0;
  for (double v : pab)
    if (v > 0) hab -= v * std::log(v);
  for (std::size_t b = 0; b < nb; ++b) {
    double pb = 0.0;
    for (std::size_t a = 0; a < na; ++a) pb += pab[a * nb + b];
    if (pb > 0) hb -= pb * std::log(pb);
  }
  return hab - hb;
}

}  // namespace

TEST(DiscreteEntropy, KnownValues) {
  EXPECT_NEAR(discrete_entropy(std::vector<double>{0.5, 0.5}), std::log(2.0), 1e-15);
  EXPECT_NEAR(nats_to_bits(discrete_entropy(std::vector<double>(8, 0.125))), 3.0, 1e-14);
  EXPECT_EQ(discrete_entropy(std::vector<double>{1.0, 0.0}), 0.0);
  EXPECT_NEAR(bits_to_nats(1.0), std::log(2.0), 1e-15);
  EXPECT_THROW(discrete_entropy(std::vector<double>{0.5, 0.6}), std::invalid_argument);
  EXPECT_THROW(discrete_entropy(std::vector<double>{1.5, -0.5}), std::invalid_argument);
}

TEST(DiscreteEntropy, BoundedByLogSupport) {
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + rng.uniform_int(30);
    const auto j = DiscreteJoint::random({n}, rng);
    const double h = j.entropy();
    EXPECT_GE(h, 0.0);
    EXPECT_LE(h, std::log(static_cast<double>(n)) + 1e-12);
  }
}

TEST(DiscreteJoint, MarginalsAndValidation) {
  const DiscreteJoint j({2, 3}, {0.1, 0.2, 0.1, 0.3, 0.2, 0.1});
  const auto m0 = j.marginal({0});
  EXPECT_NEAR(m0.probs()[0], 0.4, 1e-15);
  const auto m1 = j.marginal({1});
  EXPECT_NEAR(m1.probs()[1], 0.4, 1e-15);
  const auto swapped = j.marginal({1, 0});
  EXPECT_DOUBLE_EQ(swapped.probs()[1], 0.3);
  EXPECT_THROW(DiscreteJoint({2, 2}, {0.5, 0.5}), std::invalid_argument);
  EXPECT_THROW(DiscreteJoint({2, 0}, {}), std::invalid_argument);
}

TEST(ConditionalEntropy, MatchesChainRuleOracle) {
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    const std::size_t na = 2 + rng.uniform_int(6), nb = 2 + rng.uniform_int(6);
    const auto j = DiscreteJoint::random({na, nb}, rng);
    EXPECT_NEAR(conditional_entropy(j, 1), chain_rule_conditional(j.probs(), na, nb), 1e-12);
  }
}

TEST(ConditionalEntropy, IndependentAndDeterministicCases) {
  // Independent: H(A|B) = H(A).
  const std::vector<double> pa{0.2, 0.8}, pb{0.3, 0.3, 0.4};
  std::vector<double> p;
  for (double a : pa)
    for (double b : pb) p.push_back(a * b);
  const DiscreteJoint ind({2, 3}, p);
  EXPECT_NEAR(conditional_entropy(ind, 1), discrete_entropy(pa), 1e-14);
  // A = B: H(A|B) = 0.
  const DiscreteJoint same({2, 2}, {0.4, 0.0, 0.0, 0.6});
  EXPECT_EQ(conditional_entropy(same, 1), 0.0);
}

TEST(MutualInformation, SymmetricAndNonNegative) {
  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    const auto j = DiscreteJoint::random({3, 5}, rng);
    const double iab = mutual_information(j, {0}, {1});
    EXPECT_GE(iab, -1e-12);
    EXPECT_NEAR(iab, mutual_information(j, {1}, {0}), 1e-12);
  }
}

TEST(Decompositions, HoldForRandomDeterministicMaps) {
  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    const std::size_t nx = 4 + rng.uniform_int(13), nc = 2 + rng.uniform_int(3);
    const std::size_t ny = 1 + rng.uniform_int(nx);
    std::vector<std::size_t> f(nx);
    for (auto& v : f) v = rng.uniform_int(ny);
    const auto xyc = joint_with_function(DiscreteJoint::random({nx, nc}, rng), f, ny);
    const auto r = verify_decompositions(xyc);
    EXPECT_TRUE(r.ok()) << r.max_residual();
    EXPECT_LE(r.h_y, r.h_x + 1e-12);
    EXPECT_GE(r.h_x_given_yc, -1e-15);
  }
}

TEST(Decompositions, RejectNonDeterministicRepresentation) {
  const DiscreteJoint xyc({1, 2, 1}, {0.5, 0.5});
  EXPECT_THROW(verify_decompositions(xyc), std::invalid_argument);
  const DiscreteJoint xc({2, 1}, {0.5, 0.5});
  EXPECT_THROW(joint_with_function(xc, std::vector<std::size_t>{0, 3}, 2), std::invalid_argument);
}

TEST(Dpi, DeterministicChainNeverIncreasesConditionalEntropy) {
  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    const std::size_t nc = 2 + rng.uniform_int(3), nx = 16;
    MarkovChainSpec chain;
    chain.p_c = DiscreteJoint::random({nc}, rng).probs();
    chain.c_to_x = Kernel{nc, nx, DiscreteJoint::random({nc, nx}, rng).probs()};
    for (std::size_t c = 0; c < nc; ++c) {
      double s = 0.0;
      for (std::size_t x = 0; x < nx; ++x) s += chain.c_to_x.p[c * nx + x];
      for (std::size_t x = 0; x < nx; ++x) chain.c_to_x.p[c * nx + x] /= s;
    }
    std::size_t prev = nx;
    for (std::size_t next : {8u, 4u}) {
      std::vector<std::size_t> map(prev);
      for (auto& m : map) m = rng.uniform_int(next);
      chain.stages.push_back({Kernel::deterministic(map, next), {2, next / 2}});
      prev = next;
    }
    const auto r = verify_dpi(chain);
    EXPECT_TRUE(r.ok()) << r.min_chain_slack << " " << r.min_subadditive_slack;
    for (std::size_t k = 1; k < r.conditional_entropies.size(); ++k)
      EXPECT_LE(r.conditional_entropies[k], r.conditional_entropies[k - 1] + 1e-12);
  }
}

TEST(Dpi, NoisyStageMayIncreaseButIsNotCountedInChainSlack) {
  MarkovChainSpec chain;
  chain.p_c = {1.0};
  chain.c_to_x = Kernel{1, 2, {1.0, 0.0}};
  chain.stages.push_back({Kernel{2, 2, {0.5, 0.5, 0.5, 0.5}}, {}});
  const auto r = verify_dpi(chain);
  EXPECT_NEAR(r.conditional_entropies[1], std::log(2.0), 1e-15);
  EXPECT_EQ(r.min_chain_slack, 0.0);
}

TEST(Dpi, RejectsInconsistentStages) {
  MarkovChainSpec chain;
  chain.p_c = {0.5, 0.5};
  chain.c_to_x = Kernel{2, 3, {1, 0, 0, 0, 1, 0}};
  chain.stages.push_back({Kernel::deterministic(std::vector<std::size_t>{0, 1}, 2), {}});
  EXPECT_THROW(verify_dpi(chain), std::invalid_argument);
  chain.stages[0] = {Kernel::deterministic(std::vector<std::size_t>{0, 1, 2}, 3), {2, 2}};
  EXPECT_THROW(verify_dpi(chain), std::invalid_argument);
}
