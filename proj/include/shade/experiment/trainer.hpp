#ifndef SHADE_EXPERIMENT_TRAINER_HPP
#define SHADE_EXPERIMENT_TRAINER_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "shade/baseline_regularizer.hpp"
#include "shade/data/dataset.hpp"
#include "shade/data/idx.hpp"
#include "shade/data/synthetic.hpp"
#include "shade/experiment/config.hpp"
#include "shade/info/monitor.hpp"
#include "shade/network.hpp"
#include "shade/optimizer.hpp"
#include "shade/shade_regularizer.hpp"

namespace shade::experiment {

/// Loss became non-finite during training (CLI exit code 3).
class NumericAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataSplits {
  data::Dataset train, val, test;
};

namespace detail {

inline data::Dataset shape_for(const ExperimentConfig& c, data::Dataset d) {
  if (c.architecture == Architecture::Mlp) return d.flattened();
  if (!c.dataset.image_shape.empty()) return d.reshaped(c.dataset.image_shape);
  if (d.inputs.rank() == 4) return d;
  // square single-channel view of flat synthetic rows
  const std::size_t dim = d.inputs.row_size();
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(dim))));
  if (side * side != dim) {
    throw ConfigError("dataset: rows of " + std::to_string(dim) +
                      " values cannot be viewed as a square image; set dataset.image_shape");
  }
  return d.reshaped({1, side, side});
}

}  // namespace detail

/// Materializes train/val/test according to the dataset section and applies
/// the stratified training subset, if any.
inline DataSplits load_data(const ExperimentConfig& c) {
  DataSplits s;
  const auto& ds = c.dataset;
  if (ds.source == "synthetic") {
    // One seed per split, all derived from data_seed.
    Rng seeds(ds.data_seed);
    const auto train_seed = seeds.next_u64(), val_seed = seeds.next_u64(), test_seed = seeds.next_u64();
    s.train = data::make_synthetic(ds.synthetic, ds.train_size, train_seed, data::Split::Train);
    s.val = data::make_synthetic(ds.synthetic, ds.val_size, val_seed, data::Split::Val);
    s.test = data::make_synthetic(ds.synthetic, ds.test_size, test_seed, data::Split::Test);
  } else {
    if (ds.train_images.empty() || ds.train_labels.empty() || ds.test_images.empty() ||
        ds.test_labels.empty()) {
      throw ConfigError("dataset: idx source needs train/test image and label paths");
    }
    auto train = data::load_idx(ds.train_images, ds.train_labels, ds.num_classes);
    s.test = data::load_idx(ds.test_images, ds.test_labels, train.num_classes);
    s.test.split = data::Split::Test;
    if (!ds.val_images.empty()) {
      s.val = data::load_idx(ds.val_images, ds.val_labels, train.num_classes);
      s.train = std::move(train);
    } else {
      if (ds.val_size >= train.size()) throw ConfigError("dataset: val_size exceeds training file");
      const std::size_t n_train = train.size() - ds.val_size;
      std::vector<std::size_t> a(n_train), b(ds.val_size);
      for (std::size_t i = 0; i < n_train; ++i) a[i] = i;
      for (std::size_t i = 0; i < ds.val_size; ++i) b[i] = n_train + i;
      s.val = train.gather(b);
      s.train = train.gather(a);
    }
    s.val.split = data::Split::Val;
  }
  if (c.subset) s.train = data::stratified_subset(s.train, *c.subset);
  s.train = detail::shape_for(c, std::move(s.train));
  s.val = detail::shape_for(c, std::move(s.val));
  s.test = detail::shape_for(c, std::move(s.test));
  return s;
}

/// Untrained network for the config; parameters drawn from `rng`.
inline Network build_network(const ExperimentConfig& c, const Shape& sample_shape,
                             std::size_t classes, Rng& rng) {
  Network net;
  if (c.architecture == Architecture::Mlp) {
    if (sample_shape.size() != 1) throw ConfigError("mlp: expects flat inputs");
    const auto& rates = c.regularizer.kind == RegularizerKind::Dropout ? c.regularizer.dropout_rates
                                                                        : std::vector<double>{};
    net = make_mlp(sample_shape[0], c.hidden, classes, rates);
  } else {
    if (sample_shape.size() != 3) throw ConfigError("convnet: expects [C, H, W] inputs");
    const double head = c.regularizer.kind == RegularizerKind::Dropout && !c.regularizer.dropout_rates.empty()
                            ? c.regularizer.dropout_rates.back()
                            : 0.0;
    net = make_convnet(sample_shape[0], sample_shape[1], sample_shape[2], c.conv_stages, classes, head);
  }
  net.init(rng);
  return net;
}

inline ShadeState make_shade_state(const ExperimentConfig& c, const Network& net) {
  ShadeState state(net.units_per_layer(), c.regularizer.decay);
  if (!c.regularizer.layer_weights.empty()) {
    try {
      state.set_layer_weights(c.regularizer.layer_weights);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("regularizer.layer_weights: ") + e.what());
    }
  }
  return state;
}

/// Fraction of rows whose argmax logit equals the label (evaluation mode).
inline double accuracy(const Network& net, const data::Dataset& d, std::size_t chunk = 1000) {
  if (d.size() == 0) return 0.0;
  Network probe = net;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < d.size(); start += chunk) {
    const std::size_t end = std::min(d.size(), start + chunk);
    std::vector<std::size_t> idx(end - start);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
    const auto b = d.gather(idx);
    const auto pred = argmax_rows(probe.forward(b.inputs).logits);
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == b.labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(d.size());
}

struct MetricsRow {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double test_accuracy = 0.0;
  double omega = 0.0;  // mean unweighted SHADE penalty over the epoch's batches
  std::vector<double> h_y_given_c;  // per regularized layer, mean over units
  std::vector<double> h_y_given_z;
  double wall_clock_s = 0.0;
};

/// Deterministic metrics CSV. Wall-clock time is excluded here and goes to
/// the plain-text log from write_timing_log, so reruns produce identical CSVs.
inline void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows,
                              std::size_t layers) {
  os << "epoch,train_loss,train_acc,val_acc,test_acc,omega";
  for (std::size_t l = 0; l < layers; ++l) os << ",h_y_given_c_l" << l;
  for (std::size_t l = 0; l < layers; ++l) os << ",h_y_given_z_l" << l;
  os << '\n';
  os << std::setprecision(10);
  for (const auto& r : rows) {
    os << r.epoch << ',' << r.train_loss << ',' << r.train_accuracy << ',' << r.val_accuracy << ','
       << r.test_accuracy << ',' << r.omega;
    for (std::size_t l = 0; l < layers; ++l) os << ',' << (l < r.h_y_given_c.size() ? r.h_y_given_c[l] : 0.0);
    for (std::size_t l = 0; l < layers; ++l) os << ',' << (l < r.h_y_given_z.size() ? r.h_y_given_z[l] : 0.0);
    os << '\n';
  }
}

inline void write_timing_log(std::ostream& os, const std::vector<MetricsRow>& rows) {
  os << std::setprecision(6);
  for (const auto& r : rows) os << "epoch " << r.epoch << " wall_clock_s " << r.wall_clock_s << '\n';
}

struct TrainResult {
  Network network;
  std::optional<ShadeState> shade;
  std::vector<MetricsRow> metrics;
  bool aborted = false;  // non-finite loss; network/shade hold the last good epoch
  std::string abort_reason;
};

struct TrainOptions {
  bool evaluate_each_epoch = true;
  /// Called with the state at the end of every completed epoch.
  std::function<void(const TrainResult&)> on_epoch;
};

/// Mini-batch training. Per batch: forward, classification loss plus
/// beta * penalty, backward, optimizer step, then the moving-average update
/// of the SHADE statistics from this batch's pre-activations.
inline TrainResult train(const ExperimentConfig& c, const DataSplits& data, Network net,
                         const TrainOptions& options = {}) {
  Rng master(c.seed);
  Rng init_rng = master.split();  // consumed by build_network callers
  (void)init_rng;
  Rng batch_rng = master.split();
  Rng dropout_rng = master.split();

  const auto& reg = c.regularizer;
  std::optional<ShadeState> shade;
  if (reg.kind == RegularizerKind::Shade) shade = make_shade_state(c, net);
  const bool shade_penalty = shade && reg.beta > 0.0;
  const bool wd_penalty = reg.kind == RegularizerKind::WeightDecay && reg.beta > 0.0;

  Optimizer opt(c.optimizer);
  const data::BatchIterator batches(data.train.size(), c.batch_size, true);
  const data::Dataset& monitor_set = data.val.size() ? data.val : data.train;

  TrainResult result{net, shade, {}, false, {}};
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t epoch = 1; epoch <= c.epochs; ++epoch) {
    double loss_sum = 0.0, omega_sum = 0.0;
    std::size_t n_batches = 0, correct = 0;
    bool bad = false;
    for (const auto& idx : batches.epoch(batch_rng)) {
      const auto b = data.train.gather(idx);
      auto fwd = net.forward(b.inputs, ForwardContext{true, &dropout_rng});
      auto ce = cross_entropy(fwd.logits, b.labels);
      double loss = ce.loss;
      std::vector<Tensor> extra;
      if (shade) {
        auto sl = shade_loss(*shade, fwd.pre_activations, shade_penalty);
        omega_sum += sl.value;
        if (shade_penalty) {
          loss += reg.beta * sl.value;
          for (auto& g : sl.grads) {
            for (auto& v : g.data()) v *= reg.beta;
          }
          extra = std::move(sl.grads);
        }
      }
      net.backward(ce.grad, extra);
      if (wd_penalty) {
        loss += reg.beta * weight_decay_loss(net);
        add_weight_decay_gradient(net, reg.beta);
      }
      if (!std::isfinite(loss)) {
        bad = true;
        break;
      }
      const auto pred = argmax_rows(fwd.logits);
      for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == b.labels[i];
      opt.step(net.parameters());
      if (shade) shade->update(fwd.pre_activations);
      loss_sum += loss;
      ++n_batches;
    }
    if (bad) {
      result.aborted = true;
      result.abort_reason = "non-finite loss in epoch " + std::to_string(epoch);
      return result;
    }

    MetricsRow row;
    row.epoch = epoch;
    row.train_loss = n_batches ? loss_sum / static_cast<double>(n_batches) : 0.0;
    row.train_accuracy = static_cast<double>(correct) / static_cast<double>(data.train.size());
    row.omega = n_batches ? omega_sum / static_cast<double>(n_batches) : 0.0;
    if (options.evaluate_each_epoch || epoch == c.epochs) {
      row.val_accuracy = accuracy(net, data.val);
      row.test_accuracy = accuracy(net, data.test);
    }
    if (c.monitor && monitor_set.size()) {
      for (std::size_t l = 0; l < net.regularized_layers().size(); ++l) {
        const auto s = info::summarize(info::monitor_conditional_entropy(net, monitor_set, l));
        row.h_y_given_c.push_back(s.mean_h_y_given_c);
        row.h_y_given_z.push_back(s.mean_h_y_given_z);
      }
    }
    row.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.network = net;
    result.shade = shade;
    result.metrics.push_back(std::move(row));
    if (options.on_epoch) options.on_epoch(result);
  }
  return result;
}

/// Builds the network from the config seed and trains it.
inline TrainResult train(const ExperimentConfig& c, const DataSplits& data,
                         const TrainOptions& options = {}) {
  Rng master(c.seed);
  Rng init_rng = master.split();
  Network net = build_network(c, data.train.sample_shape(), data.train.num_classes, init_rng);
  return train(c, data, std::move(net), options);
}

}  // namespace shade::experiment

#endif  // SHADE_EXPERIMENT_TRAINER_HPP
