#ifndef SHADE_LAYERS_HPP
#define SHADE_LAYERS_HPP

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "shade/rng.hpp"
#include "shade/tensor.hpp"

namespace shade {

/// A trainable array together with its gradient buffer.
struct ParamRef {
  std::size_t layer = 0;
  std::size_t slot = 0;
  Tensor* value = nullptr;
  Tensor* grad = nullptr;
  bool is_weight = false;  // false for biases
};

struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;
};

namespace detail {

inline void require_batch_rank(const Tensor& x, std::size_t rank, const char* layer) {
  if (x.rank() != rank) {
    throw std::invalid_argument(std::string(layer) + ": expected rank-" +
                                std::to_string(rank) + " input, got " +
                                shape_string(x.shape()));
  }
}

inline void require_cache(bool ok, const char* layer) {
  if (!ok) {
    throw std::logic_error(std::string(layer) + ": backward called before forward");
  }
}

}  // namespace detail

/// Fully connected layer, y = x W + b with W stored [in x out].
struct Dense {
  std::size_t in = 0, out = 0;
  Tensor weight, bias, grad_weight, grad_bias;
  Tensor input;  // cached for backward

  Dense() = default;
  Dense(std::size_t in_features, std::size_t out_features)
      : in(in_features),
        out(out_features),
        weight({in_features, out_features}),
        bias({out_features}),
        grad_weight({in_features, out_features}),
        grad_bias({out_features}) {}

  static constexpr const char* kind = "dense";

  void init(Rng& rng) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(in));
    for (auto& w : weight.data()) w = rng.normal(0.0, stddev);
    bias.fill(0.0);
  }

  Shape output_shape(const Shape& in_shape) const {
    if (in_shape.size() != 1 || in_shape[0] != in) {
      throw std::invalid_argument("dense: expected per-sample shape [" +
                                  std::to_string(in) + "], got " + shape_string(in_shape));
    }
    return {out};
  }

  Tensor forward(const Tensor& x, const ForwardContext&) {
    detail::require_batch_rank(x, 2, kind);
    if (x.dim(1) != in) {
      throw std::invalid_argument("dense: input " + shape_string(x.shape()) +
                                  " does not match weight " + shape_string(weight.shape()));
    }
    input = x;
    Tensor y = matmul(x, weight);
    for (std::size_t n = 0; n < y.dim(0); ++n) {
      for (std::size_t j = 0; j < out; ++j) y(n, j) += bias[j];
    }
    return y;
  }

  Tensor backward(const Tensor& grad_out) {
    detail::require_cache(!input.empty(), kind);
    grad_weight = matmul_tn(input, grad_out);
    grad_bias.fill(0.0);
    for (std::size_t n = 0; n < grad_out.dim(0); ++n) {
      for (std::size_t j = 0; j < out; ++j) grad_bias[j] += grad_out(n, j);
    }
    return matmul_nt(grad_out, weight);
  }

  std::vector<ParamRef> params(std::size_t layer) {
    return {{layer, 0, &weight, &grad_weight, true}, {layer, 1, &bias, &grad_bias, false}};
  }
};

/// 2-D convolution over [N, C, H, W] inputs, square kernel, zero padding.
struct Conv2d {
  std::size_t in_channels = 0, out_channels = 0, kernel = 0, padding = 0, stride = 1;
  Tensor weight, bias, grad_weight, grad_bias;  // weight [out, in, k, k]
  Tensor input;

  Conv2d() = default;
  Conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t k, std::size_t pad,
         std::size_t stride_ = 1)
      : in_channels(in_ch),
        out_channels(out_ch),
        kernel(k),
        padding(pad),
        stride(stride_),
        weight({out_ch, in_ch, k, k}),
        bias({out_ch}),
        grad_weight({out_ch, in_ch, k, k}),
        grad_bias({out_ch}) {
    if (k == 0 || stride_ == 0) throw std::invalid_argument("conv2d: zero kernel or stride");
  }

  static constexpr const char* kind = "conv2d";

  void init(Rng& rng) {
    const double fan_in = static_cast<double>(in_channels * kernel * kernel);
    const double stddev = std::sqrt(2.0 / fan_in);
    for (auto& w : weight.data()) w = rng.normal(0.0, stddev);
    bias.fill(0.0);
  }

  std::size_t out_extent(std::size_t extent) const {
    const std::size_t padded = extent + 2 * padding;
    if (padded < kernel) throw std::invalid_argument("conv2d: kernel larger than input");
    return (padded - kernel) / stride + 1;
  }

  Shape output_shape(const Shape& in_shape) const {
    if (in_shape.size() != 3 || in_shape[0] != in_channels) {
      throw std::invalid_argument("conv2d: expected per-sample shape [" +
                                  std::to_string(in_channels) + "xHxW], got " +
                                  shape_string(in_shape));
    }
    return {out_channels, out_extent(in_shape[1]), out_extent(in_shape[2])};
  }

  Tensor forward(const Tensor& x, const ForwardContext&) {
    detail::require_batch_rank(x, 4, kind);
    if (x.dim(1) != in_channels) {
      throw std::invalid_argument("conv2d: input " + shape_string(x.shape()) +
                                  " has wrong channel count for weight " +
                                  shape_string(weight.shape()));
    }
    input = x;
    const std::size_t n_batch = x.dim(0), h = x.dim(2), w = x.dim(3);
    const std::size_t oh = out_extent(h), ow = out_extent(w);
    Tensor y({n_batch, out_channels, oh, ow});
    const double* xd = x.data().data();
    const double* wd = weight.data().data();
    double* yd = y.data().data();
    for (std::size_t n = 0; n < n_batch; ++n) {
      for (std::size_t o = 0; o < out_channels; ++o) {
        double* yplane = yd + ((n * out_channels + o) * oh) * ow;
        for (std::size_t i = 0; i < oh * ow; ++i) yplane[i] = bias[o];
        for (std::size_t c = 0; c < in_channels; ++c) {
          const double* xplane = xd + ((n * in_channels + c) * h) * w;
          const double* wk = wd + ((o * in_channels + c) * kernel) * kernel;
          for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
              double acc = 0.0;
              for (std::size_t ky = 0; ky < kernel; ++ky) {
                const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                static_cast<std::ptrdiff_t>(padding);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                for (std::size_t kx = 0; kx < kernel; ++kx) {
                  const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                  static_cast<std::ptrdiff_t>(padding);
                  if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                  acc += wk[ky * kernel + kx] * xplane[iy * w + ix];
                }
              }
              yplane[oy * ow + ox] += acc;
            }
          }
        }
      }
    }
    return y;
  }

  Tensor backward(const Tensor& grad_out) {
    detail::require_cache(!input.empty(), kind);
    const std::size_t n_batch = input.dim(0), h = input.dim(2), w = input.dim(3);
    const std::size_t oh = grad_out.dim(2), ow = grad_out.dim(3);
    Tensor grad_in(input.shape());
    grad_weight.fill(0.0);
    grad_bias.fill(0.0);
    const double* xd = input.data().data();
    const double* gd = grad_out.data().data();
    const double* wd = weight.data().data();
    double* gwd = grad_weight.data().data();
    double* gid = grad_in.data().data();
    for (std::size_t n = 0; n < n_batch; ++n) {
      for (std::size_t o = 0; o < out_channels; ++o) {
        const double* gplane = gd + ((n * out_channels + o) * oh) * ow;
        for (std::size_t i = 0; i < oh * ow; ++i) grad_bias[o] += gplane[i];
        for (std::size_t c = 0; c < in_channels; ++c) {
          const double* xplane = xd + ((n * in_channels + c) * h) * w;
          double* giplane = gid + ((n * in_channels + c) * h) * w;
          const double* wk = wd + ((o * in_channels + c) * kernel) * kernel;
          double* gwk = gwd + ((o * in_channels + c) * kernel) * kernel;
          for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
              const double g = gplane[oy * ow + ox];
              if (g == 0.0) continue;
              for (std::size_t ky = 0; ky < kernel; ++ky) {
                const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                static_cast<std::ptrdiff_t>(padding);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                for (std::size_t kx = 0; kx < kernel; ++kx) {
                  const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                  static_cast<std::ptrdiff_t>(padding);
                  if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                  gwk[ky * kernel + kx] += g * xplane[iy * w + ix];
                  giplane[iy * w + ix] += g * wk[ky * kernel + kx];
                }
              }
            }
          }
        }
      }
    }
    return grad_in;
  }

  std::vector<ParamRef> params(std::size_t layer) {
    return {{layer, 0, &weight, &grad_weight, true}, {layer, 1, &bias, &grad_bias, false}};
  }
};

/// max(y, 0); the derivative at exactly 0 is 0.
struct Relu {
  Tensor input;
  static constexpr const char* kind = "relu";

  Shape output_shape(const Shape& in_shape) const { return in_shape; }

  Tensor forward(const Tensor& x, const ForwardContext&) {
    input = x;
    Tensor y = x;
    for (auto& v : y.data()) v = v > 0.0 ? v : 0.0;
    return y;
  }

  Tensor backward(const Tensor& grad_out) {
    detail::require_cache(!input.empty(), kind);
    Tensor g = grad_out;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!(input[i] > 0.0)) g[i] = 0.0;
    }
    return g;
  }

  std::vector<ParamRef> params(std::size_t) { return {}; }
};

/// threshold * 1(y >= threshold). Zero derivative almost everywhere.
struct BinaryActivation {
  /// One threshold per unit (dense feature or conv channel).
  std::vector<double> thresholds;
  Tensor input;
  static constexpr const char* kind = "binary";

  BinaryActivation() = default;
  explicit BinaryActivation(std::vector<double> t) : thresholds(std::move(t)) {
    if (thresholds.empty()) throw std::invalid_argument("binary activation: no thresholds");
    for (double v : thresholds) {
      if (!(v > 0.0)) throw std::invalid_argument("binary activation: thresholds must be > 0");
    }
  }

  Shape output_shape(const Shape& in_shape) const {
    if (in_shape.empty() || in_shape[0] != thresholds.size()) {
      throw std::invalid_argument("binary activation: " + std::to_string(thresholds.size()) +
                                  " thresholds for input " + shape_string(in_shape));
    }
    return in_shape;
  }

  Tensor forward(const Tensor& x, const ForwardContext&) {
    input = x;
    Tensor y = x;
    const std::size_t units = x.dim(1);
    const std::size_t inner = x.row_size() / units;
    for (std::size_t k = 0; k < y.size(); ++k) {
      const double t = thresholds[(k / inner) % units];
      y[k] = y[k] >= t ? t : 0.0;
    }
    return y;
  }

  Tensor backward(const Tensor& grad_out) {
    detail::require_cache(!input.empty(), kind);
    return Tensor(grad_out.shape());
  }

  std::vector<ParamRef> params(std::size_t) { return {}; }
};

/// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
struct MaxPool2d {
  std::size_t size = 2;
  Shape in_shape;
  std::vector<std::size_t> argmax;
  static constexpr const char* kind = "maxpool2d";

  Shape output_shape(const Shape& s) const {
    if (s.size() != 3 || s[1] < size || s[2] < size) {
      throw std::invalid_argument("maxpool2d: bad per-sample shape " + shape_string(s));
    }
    return {s[0], s[1] / size, s[2] / size};
  }

  Tensor forward(const Tensor& x, const ForwardContext&) {
    detail::require_batch_rank(x, 4, kind);
    in_shape = x.shape();
    const std::size_t nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t oh = h / size, ow = w / size;
    Tensor y({x.dim(0), x.dim(1), oh, ow});
    argmax.assign(y.size(), 0);
    for (std::size_t p = 0; p < nc; ++p) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          std::size_t best = (p * h + oy * size) * w + ox * size;
          for (std::size_t dy = 0; dy < size; ++dy) {
            for (std::size_t dx = 0; dx < size; ++dx) {
              const std::size_t idx = (p * h + oy * size + dy) * w + ox * size + dx;
              if (x[idx] > x[best]) best = idx;
            }
          }
          const std::size_t o = (p * oh + oy) * ow + ox;
          y[o] = x[best];
          argmax[o] = best;
        }
      }
    }
    return y;
  }

  Tensor backward(const Tensor& grad_out) {
    detail::require_cache(!in_shape.empty(), kind);
    Tensor g(in_shape);
    for (std::size_t o = 0; o < grad_out.size(); ++o) g[argmax[o]] += grad_out[o];
    return g;
  }

  std::vector<ParamRef> params(std::size_t) { return {}; }
};

struct Flatten {
  Shape in_shape;
  static constexpr const char* kind = "flatten";

  Shape output_shape(const Shape& s) const { return {shape_size(s)}; }

  Tensor forward(const Tensor& x, const ForwardContext&) {
    in_shape = x.shape();
    return x.reshaped({x.rows(), x.row_size()});
  }

  Tensor backward(const Tensor& grad_out) {
    detail::require_cache(!in_shape.empty(), kind);
    return grad_out.reshaped(in_shape);
  }

  std::vector<ParamRef> params(std::size_t) { return {}; }
};

/// Inverted dropout: survivors are scaled by 1/(1-rate) during training.
struct Dropout {
  double rate = 0.0;
  Tensor mask;
  static constexpr const char* kind = "dropout";

  Dropout() = default;
  explicit Dropout(double r) : rate(r) {
    if (!(r >= 0.0 && r < 1.0)) throw std::invalid_argument("dropout: rate must be in [0, 1)");
  }

  Shape output_shape(const Shape& s) const { return s; }

  Tensor forward(const Tensor& x, const ForwardContext& ctx) {
    if (!ctx.training || rate == 0.0) {
      mask = Tensor();
      return x;
    }
    if (!ctx.rng) throw std::logic_error("dropout: training forward needs an rng");
    mask = Tensor(x.shape());
    const double keep_scale = 1.0 / (1.0 - rate);
    Tensor y = x;
    for (std::size_t i = 0; i < y.size(); ++i) {
      mask[i] = ctx.rng->uniform() < rate ? 0.0 : keep_scale;
      y[i] *= mask[i];
    }
    return y;
  }

  Tensor backward(const Tensor& grad_out) {
    if (mask.empty()) return grad_out;
    Tensor g = grad_out;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= mask[i];
    return g;
  }

  std::vector<ParamRef> params(std::size_t) { return {}; }
};

/// Functional form of inverted dropout over a whole tensor.
inline Tensor dropout_forward(const Tensor& activations, double rate, Rng& rng,
                              bool training) {
  Dropout d(rate);
  return d.forward(activations, ForwardContext{training, &rng});
}

using Layer = std::variant<Dense, Conv2d, Relu, MaxPool2d, Flatten, Dropout, BinaryActivation>;

inline const char* layer_kind(const Layer& layer) {
  return std::visit([](const auto& l) { return std::decay_t<decltype(l)>::kind; }, layer);
}

inline bool is_linear(const Layer& layer) {
  return std::holds_alternative<Dense>(layer) || std::holds_alternative<Conv2d>(layer);
}

inline bool is_activation(const Layer& layer) {
  return std::holds_alternative<Relu>(layer) || std::holds_alternative<BinaryActivation>(layer);
}

}  // namespace shade

#endif  // SHADE_LAYERS_HPP
