#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "shade/layers.hpp"
#include "shade/rng.hpp"

using namespace shade;

namespace {

const ForwardContext kEval{};

// sum(g * f(x)) for a fixed random g turns a tensor-valued map into a scalar
// whose gradient is backward(g).
double probe(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, const Tensor& g) {
  const Tensor y = f(x);
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * g[i];
  return s;
}

double fd(const std::function<double()>& f, double& param, double h = 1e-6) {
  const double keep = param;
  param = keep + h;
  const double up = f();
  param = keep - h;
  const double down = f();
  param = keep;
  return (up - down) / (2.0 * h);
}

// Direct cross-correlation with explicit zero padding, one output at a time.
double conv_at(const Conv2d& c, const Tensor& x, std::size_t n, std::size_t o, std::size_t oy,
               std::size_t ox) {
  const long h = static_cast<long>(x.dim(2)), w = static_cast<long>(x.dim(3));
  double acc = c.bias[o];
  for (std::size_t ch = 0; ch < c.in_channels; ++ch)
    for (std::size_t ky = 0; ky < c.kernel; ++ky)
      for (std::size_t kx = 0; kx < c.kernel; ++kx) {
        const long iy = static_cast<long>(oy * c.stride + ky) - static_cast<long>(c.padding);
        const long ix = static_cast<long>(ox * c.stride + kx) - static_cast<long>(c.padding);
        if (iy < 0 || ix < 0 || iy >= h || ix >= w) continue;
        const double xv = x.values()[((n * x.dim(1) + ch) * x.dim(2) + iy) * x.dim(3) + ix];
        const double wv = c.weight.values()[((o * c.in_channels + ch) * c.kernel + ky) * c.kernel + kx];
        acc += xv * wv;
      }
  return acc;
}

}  // namespace

TEST(Dense, HandExample) {
  Dense d(2, 1);
  d.weight = Tensor({2, 1}, std::vector<double>{2.0, -1.0});
  d.bias = Tensor({1}, 0.5);
  const auto y = d.forward(Tensor::matrix({{1, 3}, {0, 0}}), kEval);
  EXPECT_DOUBLE_EQ(y(0, 0), 2.0 - 3.0 + 0.5);
  EXPECT_DOUBLE_EQ(y(1, 0), 0.5);
}

TEST(Dense, BackwardMatchesFiniteDifferences) {
  Rng rng(1);
  Dense d(4, 3);
  d.init(rng);
  for (auto& b : d.bias.data()) b = rng.normal();
  Tensor x = rng_gaussian(rng, {5, 4}, 0.0, 1.0);
  const Tensor g = rng_gaussian(rng, {5, 3}, 0.0, 1.0);
  auto f = [&](const Tensor& in) { return d.forward(in, kEval); };
  d.forward(x, kEval);
  const Tensor gx = d.backward(g);
  const Tensor gw = d.grad_weight, gb = d.grad_bias;
  auto scalar = [&] { return probe(f, x, g); };
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(gx[i], fd(scalar, x[i]), 1e-8);
  for (std::size_t i = 0; i < d.weight.size(); ++i) EXPECT_NEAR(gw[i], fd(scalar, d.weight[i]), 1e-8);
  for (std::size_t i = 0; i < d.bias.size(); ++i) EXPECT_NEAR(gb[i], fd(scalar, d.bias[i]), 1e-8);
}

TEST(Dense, RejectsWrongWidth) {
  Dense d(3, 2);
  EXPECT_THROW(d.forward(Tensor({2, 4}), kEval), std::invalid_argument);
  EXPECT_THROW(d.output_shape({4}), std::invalid_argument);
}

TEST(Conv2d, MatchesDirectOracle) {
  Rng rng(2);
  for (std::size_t stride : {1u, 2u}) {
    Conv2d c(2, 3, 3, 1, stride);
    c.init(rng);
    for (auto& b : c.bias.data()) b = rng.normal();
    const Tensor x = rng_gaussian(rng, {2, 2, 5, 6}, 0.0, 1.0);
    const Tensor y = c.forward(x, kEval);
    ASSERT_EQ(y.shape(), (Shape{2, 3, c.out_extent(5), c.out_extent(6)}));
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t o = 0; o < 3; ++o)
        for (std::size_t oy = 0; oy < y.dim(2); ++oy)
          for (std::size_t ox = 0; ox < y.dim(3); ++ox) {
            const double got = y.values()[((n * 3 + o) * y.dim(2) + oy) * y.dim(3) + ox];
            EXPECT_NEAR(got, conv_at(c, x, n, o, oy, ox), 1e-12);
          }
  }
}

TEST(Conv2d, BackwardMatchesFiniteDifferences) {
  Rng rng(3);
  Conv2d c(2, 2, 3, 1, 1);
  c.init(rng);
  Tensor x = rng_gaussian(rng, {2, 2, 4, 4}, 0.0, 1.0);
  const Tensor g = rng_gaussian(rng, {2, 2, 4, 4}, 0.0, 1.0);
  auto f = [&](const Tensor& in) { return c.forward(in, kEval); };
  c.forward(x, kEval);
  const Tensor gx = c.backward(g);
  const Tensor gw = c.grad_weight, gb = c.grad_bias;
  auto scalar = [&] { return probe(f, x, g); };
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(gx[i], fd(scalar, x[i]), 1e-7);
  for (std::size_t i = 0; i < c.weight.size(); ++i) EXPECT_NEAR(gw[i], fd(scalar, c.weight[i]), 1e-7);
  for (std::size_t i = 0; i < c.bias.size(); ++i) EXPECT_NEAR(gb[i], fd(scalar, c.bias[i]), 1e-7);
}

TEST(Relu, ForwardAndSubgradientAtZero) {
  Relu r;
  const auto y = r.forward(Tensor({1, 3}, std::vector<double>{-1.0, 0.0, 2.0}), kEval);
  EXPECT_EQ(y.values(), (std::vector<double>{0.0, 0.0, 2.0}));
  const auto g = r.backward(Tensor({1, 3}, 1.0));
  EXPECT_EQ(g.values(), (std::vector<double>{0.0, 0.0, 1.0}));
}

TEST(BinaryActivation, ThresholdExample) {
  BinaryActivation b({2.0});
  const auto y = b.forward(Tensor({3, 1}, std::vector<double>{-1.0, 1.0, 3.0}), kEval);
  EXPECT_EQ(y.values(), (std::vector<double>{0.0, 0.0, 2.0}));
  EXPECT_EQ(b.backward(Tensor({3, 1}, 1.0)).values(), (std::vector<double>{0.0, 0.0, 0.0}));
}

TEST(BinaryActivation, PerUnitThresholds) {
  BinaryActivation b({1.0, 3.0});
  const auto y = b.forward(Tensor::matrix({{1.5, 1.5}, {0.5, 3.0}}), kEval);
  EXPECT_EQ(y.values(), (std::vector<double>{1.0, 0.0, 0.0, 3.0}));
  EXPECT_THROW(BinaryActivation({0.0}), std::invalid_argument);
  EXPECT_THROW(b.output_shape({3}), std::invalid_argument);
}

TEST(MaxPool2d, PicksMaximumAndRoutesGradient) {
  MaxPool2d p;
  const Tensor x({1, 1, 2, 4}, std::vector<double>{1, 5, 2, 0, 3, 4, 8, 7});
  const auto y = p.forward(x, kEval);
  EXPECT_EQ(y.values(), (std::vector<double>{5, 8}));
  const auto g = p.backward(Tensor({1, 1, 1, 2}, std::vector<double>{10, 20}));
  EXPECT_EQ(g.values(), (std::vector<double>{0, 10, 0, 0, 0, 0, 20, 0}));
}

TEST(Flatten, RoundTripsShape) {
  Flatten f;
  const Tensor x({2, 3, 2, 2}, 1.0);
  EXPECT_EQ(f.forward(x, kEval).shape(), (Shape{2, 12}));
  EXPECT_EQ(f.backward(Tensor({2, 12}, 1.0)).shape(), x.shape());
}

TEST(Dropout, KillFractionAndExpectation) {
  Rng rng(4);
  const Tensor x({1000, 100}, 1.0);
  const auto y = dropout_forward(x, 0.3, rng, true);
  std::size_t zeros = 0;
  double sum = 0.0;
  for (double v : y.data()) {
    zeros += v == 0.0;
    sum += v;
  }
  EXPECT_NEAR(static_cast<double>(zeros) / y.size(), 0.3, 0.01);
  EXPECT_NEAR(sum / y.size(), 1.0, 0.02);
}

TEST(Dropout, IdentityInEvaluationAndRateZero) {
  Rng rng(5);
  const Tensor x = rng_gaussian(rng, {4, 4}, 0.0, 1.0);
  EXPECT_EQ(dropout_forward(x, 0.5, rng, false), x);
  EXPECT_EQ(dropout_forward(x, 0.0, rng, true), x);
  EXPECT_THROW(Dropout(1.0), std::invalid_argument);
}

TEST(Layer, Kinds) {
  EXPECT_TRUE(is_linear(Layer{Dense(1, 1)}));
  EXPECT_TRUE(is_activation(Layer{Relu{}}));
  EXPECT_STREQ(layer_kind(Layer{Flatten{}}), "flatten");
}
