#ifndef SHADE_NETWORK_HPP
#define SHADE_NETWORK_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "shade/layers.hpp"
#include "shade/rng.hpp"
#include "shade/tensor.hpp"

namespace shade {

struct ForwardResult {
  Tensor logits;
  /// Pre-activation outputs Y_l of the regularized layers, in network order.
  std::vector<Tensor> pre_activations;
};

/// Ordered stack of layers mapping a batch [N x input_shape...] to class scores.
class Network {
 public:
  Network() = default;
  explicit Network(Shape input_shape) : input_shape_(std::move(input_shape)) {}

  void add(Layer layer) {
    Shape s = output_shape();
    std::visit([&](const auto& l) { s = l.output_shape(s); }, layer);
    layers_.push_back(std::move(layer));
    refresh_regularized();
  }

  const Shape& input_shape() const { return input_shape_; }

  Shape output_shape() const {
    Shape s = input_shape_;
    for (const auto& layer : layers_) {
      std::visit([&](const auto& l) { s = l.output_shape(s); }, layer);
    }
    return s;
  }

  std::size_t num_layers() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return layers_.at(i); }
  const Layer& layer(std::size_t i) const { return layers_.at(i); }

  /// Dense/conv layers that feed an activation. Their outputs are the
  /// pre-activations seen by the regularizers.
  const std::vector<std::size_t>& regularized_layers() const { return regularized_; }

  /// Units per regularized layer: output features for dense, channels for conv.
  std::vector<std::size_t> units_per_layer() const {
    std::vector<std::size_t> units;
    for (std::size_t idx : regularized_) {
      const auto& l = layers_[idx];
      if (const auto* d = std::get_if<Dense>(&l)) units.push_back(d->out);
      else units.push_back(std::get<Conv2d>(l).out_channels);
    }
    return units;
  }

  void init(Rng& rng) {
    for (auto& layer : layers_) {
      if (auto* d = std::get_if<Dense>(&layer)) d->init(rng);
      else if (auto* c = std::get_if<Conv2d>(&layer)) c->init(rng);
    }
  }

  ForwardResult forward(const Tensor& batch, ForwardContext ctx = {}) {
    if (batch.rank() != input_shape_.size() + 1 ||
        !std::equal(input_shape_.begin(), input_shape_.end(), batch.shape().begin() + 1)) {
      throw std::invalid_argument("network: batch shape " + shape_string(batch.shape()) +
                                  " does not match input shape " +
                                  shape_string(input_shape_));
    }
    ForwardResult result;
    Tensor x = batch;
    std::size_t next_reg = 0;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      x = std::visit([&](auto& l) { return l.forward(x, ctx); }, layers_[i]);
      if (next_reg < regularized_.size() && regularized_[next_reg] == i) {
        result.pre_activations.push_back(x);
        ++next_reg;
      }
    }
    result.logits = std::move(x);
    has_forward_ = true;
    return result;
  }

  /// Inference without touching the caller's caches.
  Tensor predict(const Tensor& batch) const {
    Network copy = *this;
    return copy.forward(batch).logits;
  }

  /// Backpropagates dL/dlogits plus optional direct gradients on each
  /// regularized layer's pre-activation (one entry per regularized layer, or
  /// empty). Parameter gradients are overwritten.
  void backward(const Tensor& grad_logits, std::span<const Tensor> pre_activation_grads = {}) {
    if (!has_forward_) throw std::logic_error("network: backward called before forward");
    if (!pre_activation_grads.empty() && pre_activation_grads.size() != regularized_.size()) {
      throw std::invalid_argument("network: expected " + std::to_string(regularized_.size()) +
                                  " pre-activation gradients");
    }
    Tensor g = grad_logits;
    std::size_t reg = regularized_.size();
    for (std::size_t i = layers_.size(); i-- > 0;) {
      if (reg > 0 && regularized_[reg - 1] == i) {
        --reg;
        if (!pre_activation_grads.empty() && !pre_activation_grads[reg].empty()) {
          const Tensor& extra = pre_activation_grads[reg];
          if (extra.shape() != g.shape()) {
            throw std::invalid_argument("network: pre-activation gradient shape " +
                                        shape_string(extra.shape()) + " vs " +
                                        shape_string(g.shape()));
          }
          for (std::size_t k = 0; k < g.size(); ++k) g[k] += extra[k];
        }
      }
      if (i < frozen_through_) {
        zero_layer_grads(i);
        break;
      }
      g = std::visit([&](auto& l) { return l.backward(g); }, layers_[i]);
    }
    has_forward_ = false;
  }

  /// All trainable parameters, excluding frozen layers.
  std::vector<ParamRef> parameters() {
    std::vector<ParamRef> out;
    for (std::size_t i = frozen_through_; i < layers_.size(); ++i) {
      auto p = std::visit([&](auto& l) { return l.params(i); }, layers_[i]);
      out.insert(out.end(), p.begin(), p.end());
    }
    return out;
  }

  /// Every parameter including frozen ones (for checkpoints and weight decay).
  std::vector<ParamRef> all_parameters() {
    std::vector<ParamRef> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      auto p = std::visit([&](auto& l) { return l.params(i); }, layers_[i]);
      out.insert(out.end(), p.begin(), p.end());
    }
    return out;
  }

  /// Layers [0, n) receive no updates.
  void freeze_through(std::size_t n) { frozen_through_ = n; }
  std::size_t frozen_through() const { return frozen_through_; }

  /// Replaces the layer at `index` and re-validates shapes.
  void replace(std::size_t index, Layer layer) {
    layers_.at(index) = std::move(layer);
    (void)output_shape();
    refresh_regularized();
  }

 private:
  void refresh_regularized() {
    regularized_.clear();
    for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
      if (is_linear(layers_[i]) && is_activation(layers_[i + 1])) regularized_.push_back(i);
    }
  }

  void zero_layer_grads(std::size_t upto) {
    for (std::size_t i = 0; i <= upto; ++i) {
      for (auto& p : std::visit([&](auto& l) { return l.params(i); }, layers_[i])) {
        p.grad->fill(0.0);
      }
    }
  }

  Shape input_shape_;
  std::vector<Layer> layers_;
  std::vector<std::size_t> regularized_;
  std::size_t frozen_through_ = 0;
  bool has_forward_ = false;
};

/// Three dense layers (two hidden), with optional inverted dropout on the
/// inputs of the last two dense layers.
inline Network make_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                        std::size_t classes, const std::vector<double>& dropout_rates = {}) {
  Network net({input_dim});
  std::size_t prev = input_dim;
  const std::size_t n_dense = hidden.size() + 1;
  for (std::size_t i = 0; i < n_dense; ++i) {
    // Dense layer i is one of the last dropout_rates.size() layers.
    const std::size_t from_end = n_dense - i;
    if (i > 0 && from_end <= dropout_rates.size()) {
      const double rate = dropout_rates[dropout_rates.size() - from_end];
      if (rate > 0.0) net.add(Dropout(rate));
    }
    const std::size_t width = i < hidden.size() ? hidden[i] : classes;
    net.add(Dense(prev, width));
    if (i < hidden.size()) net.add(Relu{});
    prev = width;
  }
  return net;
}

/// Conv stages (conv + ReLU + 2x2 max-pool) followed by one dense head.
struct ConvStage {
  std::size_t channels;
  std::size_t kernel;
  std::size_t padding;
};

inline Network make_convnet(std::size_t in_channels, std::size_t height, std::size_t width,
                            const std::vector<ConvStage>& stages, std::size_t classes,
                            double head_dropout = 0.0) {
  Network net({in_channels, height, width});
  std::size_t c = in_channels;
  for (const auto& s : stages) {
    net.add(Conv2d(c, s.channels, s.kernel, s.padding));
    net.add(Relu{});
    net.add(MaxPool2d{});
    c = s.channels;
  }
  net.add(Flatten{});
  const std::size_t features = net.output_shape()[0];
  if (head_dropout > 0.0) net.add(Dropout(head_dropout));
  net.add(Dense(features, classes));
  return net;
}

struct LossResult {
  double loss = 0.0;
  Tensor grad;  // d loss / d logits
};

/// Mean over the batch of -log softmax(logits)[label].
inline LossResult cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) {
    throw std::invalid_argument("cross_entropy: logits must be [K x classes], got " +
                                shape_string(logits.shape()));
  }
  const std::size_t k = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != k) {
    throw std::invalid_argument("cross_entropy: " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(k) + " rows");
  }
  LossResult r{0.0, Tensor(logits.shape())};
  const double inv_k = 1.0 / static_cast<double>(k);
  for (std::size_t n = 0; n < k; ++n) {
    const int label = labels[n];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw std::invalid_argument("cross_entropy: label " + std::to_string(label) +
                                  " outside [0, " + std::to_string(classes) + ")");
    }
    double mx = logits(n, 0);
    for (std::size_t j = 1; j < classes; ++j) mx = std::max(mx, logits(n, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < classes; ++j) sum += std::exp(logits(n, j) - mx);
    const double lse = mx + std::log(sum);
    r.loss += (lse - logits(n, static_cast<std::size_t>(label))) * inv_k;
    for (std::size_t j = 0; j < classes; ++j) {
      const double p = std::exp(logits(n, j) - lse);
      r.grad(n, j) = (p - (static_cast<int>(j) == label ? 1.0 : 0.0)) * inv_k;
    }
  }
  return r;
}

inline std::vector<int> argmax_rows(const Tensor& logits) {
  std::vector<int> out(logits.dim(0));
  for (std::size_t n = 0; n < logits.dim(0); ++n) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.dim(1); ++j) {
      if (logits(n, j) > logits(n, best)) best = j;
    }
    out[n] = static_cast<int>(best);
  }
  return out;
}

/// Mean of the strictly positive entries; nullopt if there are none.
inline std::optional<double> positive_mean(std::span<const double> values) {
  double sum = 0.0;
  std::size_t count = 0;
  for (double v : values) {
    if (v > 0.0) {
      sum += v;
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

/// Replaces the ReLU following linear layer `linear_index` with the binary
/// activation t_i * 1(y_i >= t_i), where t_i is unit i's mean positive
/// pre-activation over `calibration`, and freezes every layer up to and
/// including the new activation. A unit that is never positive gets the
/// layer-wide positive mean (it outputs 0 either way). Returns the thresholds.
inline std::vector<double> binarize_layer(Network& net, std::size_t linear_index,
                                          const Tensor& calibration) {
  if (linear_index + 1 >= net.num_layers() || !is_linear(net.layer(linear_index)) ||
      !std::holds_alternative<Relu>(net.layer(linear_index + 1))) {
    throw std::invalid_argument("binarize: layer " + std::to_string(linear_index) +
                                " is not a dense/conv layer followed by ReLU");
  }
  if (calibration.empty() || calibration.rows() == 0) {
    throw std::invalid_argument("binarize: empty calibration data");
  }
  const auto& reg = net.regularized_layers();
  const auto slot = static_cast<std::size_t>(
      std::find(reg.begin(), reg.end(), linear_index) - reg.begin());
  Network probe = net;
  const Tensor y = probe.forward(calibration).pre_activations.at(slot);
  const auto layer_mean = positive_mean(y.data());
  if (!layer_mean) {
    throw std::invalid_argument("binarize: no positive pre-activation in calibration data");
  }
  const std::size_t units = y.dim(1);
  const std::size_t inner = y.row_size() / units;
  std::vector<double> sum(units, 0.0);
  std::vector<std::size_t> count(units, 0);
  for (std::size_t k = 0; k < y.size(); ++k) {
    if (y[k] > 0.0) {
      sum[(k / inner) % units] += y[k];
      ++count[(k / inner) % units];
    }
  }
  std::vector<double> thr(units, *layer_mean);
  for (std::size_t i = 0; i < units; ++i) {
    if (count[i]) thr[i] = sum[i] / static_cast<double>(count[i]);
  }
  net.replace(linear_index + 1, BinaryActivation(thr));
  net.freeze_through(linear_index + 2);
  return thr;
}

}  // namespace shade

#endif  // SHADE_NETWORK_HPP
