#ifndef SHADE_EXPERIMENT_COMMANDS_HPP
#define SHADE_EXPERIMENT_COMMANDS_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "shade/checkpoint.hpp"
#include "shade/experiment/config.hpp"
#include "shade/experiment/trainer.hpp"
#include "shade/experiment/verify.hpp"
#include "shade/info/monitor.hpp"

namespace shade::experiment {

namespace fs = std::filesystem;

/// Writes `content` to `path` through a temporary file so readers never see
/// a partial file.
inline void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline Checkpoint make_checkpoint(const ExperimentConfig& c, const Network& net,
                                  const std::optional<ShadeState>& shade, std::size_t epochs) {
  Checkpoint ck{net, shade, nlohmann::json::object()};
  ck.metadata["config"] = to_json(c);
  ck.metadata["epochs_completed"] = epochs;
  return ck;
}

/// Config stored in a checkpoint written by cmd_train / cmd_sweep.
inline ExperimentConfig checkpoint_config(const Checkpoint& ck) {
  if (!ck.metadata.contains("config")) throw ConfigError("checkpoint carries no config; pass --config");
  return parse_config(ck.metadata.at("config"));
}

/// Rejects a network whose input or output does not fit the dataset.
inline void check_compatible(Network& net, const data::Dataset& d) {
  const Shape sample = d.sample_shape();
  if (sample != net.input_shape()) {
    throw ConfigError("checkpoint expects inputs " + shape_string(net.input_shape()) +
                      ", dataset provides " + shape_string(sample));
  }
  const Shape out = net.output_shape();
  if (out.size() != 1 || out[0] != d.num_classes) {
    throw ConfigError("checkpoint has " + shape_string(out) + " outputs, dataset has " +
                      std::to_string(d.num_classes) + " classes");
  }
}

struct TrainSummary {
  TrainResult result;
  double final_val_accuracy = 0.0;
  double final_test_accuracy = 0.0;
};

/// Trains, then writes metrics.csv, timing.log, checkpoint.bin,
/// config.json and (for SHADE) shade_state.csv into `out`. On a non-finite
/// loss the last good epoch is saved before NumericAbort is thrown.
inline TrainSummary cmd_train(const ExperimentConfig& c, const fs::path& out) {
  const auto data = load_data(c);
  fs::create_directories(out);
  write_file(out / "config.json", to_json(c).dump(2) + "\n");

  TrainOptions opts;
  auto save = [&](const TrainResult& r) {
    std::ostringstream metrics, timing;
    write_metrics_csv(metrics, r.metrics, c.monitor ? r.network.regularized_layers().size() : 0);
    write_timing_log(timing, r.metrics);
    write_file(out / "metrics.csv", metrics.str());
    write_file(out / "timing.log", timing.str());
    save_checkpoint(make_checkpoint(c, r.network, r.shade, r.metrics.size()), out / "checkpoint.bin");
    if (r.shade) {
      std::ostringstream s;
      r.shade->write_csv(s);
      write_file(out / "shade_state.csv", s.str());
    }
  };
  opts.on_epoch = save;

  TrainSummary s;
  s.result = train(c, data, opts);
  save(s.result);
  if (s.result.aborted) throw NumericAbort(s.result.abort_reason);
  s.final_val_accuracy = accuracy(s.result.network, data.val);
  s.final_test_accuracy = accuracy(s.result.network, data.test);
  return s;
}

struct SweepPoint {
  double beta = 0.0;
  double val_accuracy = 0.0;
};

struct SweepResult {
  std::vector<SweepPoint> points;
  std::size_t best = 0;
  double test_accuracy = 0.0;  // selected model only
  TrainResult best_run;
};

/// Index of the highest validation accuracy; ties go to the smaller beta.
inline std::size_t select_best(const std::vector<SweepPoint>& points) {
  if (points.empty()) throw ConfigError("sweep: empty grid");
  std::size_t best = 0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    const auto& p = points[i];
    const auto& b = points[best];
    if (p.val_accuracy > b.val_accuracy || (p.val_accuracy == b.val_accuracy && p.beta < b.beta)) {
      best = i;
    }
  }
  return best;
}

inline std::vector<double> sweep_grid(const ExperimentConfig& c) {
  if (!c.beta_grid.empty()) return c.beta_grid;
  if (c.regularizer.kind == RegularizerKind::Shade || c.regularizer.kind == RegularizerKind::WeightDecay) {
    return default_beta_grid();
  }
  throw ConfigError("sweep: regularizer '" + to_string(c.regularizer.kind) +
                    "' has no beta; set beta_grid explicitly");
}

/// Trains one model per beta on the same data, selects on validation and
/// evaluates only the selected model on test.
inline SweepResult run_sweep(const ExperimentConfig& base, const DataSplits& data,
                             const std::vector<double>& grid) {
  if (grid.empty()) throw ConfigError("sweep: empty grid");
  if (data.val.size() == 0) throw ConfigError("sweep: needs a validation split");
  SweepResult r;
  TrainOptions opts;
  opts.evaluate_each_epoch = false;
  std::optional<std::size_t> best;
  for (double beta : grid) {
    ExperimentConfig c = base;
    c.regularizer.beta = beta;
    c.monitor = false;
    auto run = train(c, data, opts);
    if (run.aborted) throw NumericAbort("sweep: beta=" + std::to_string(beta) + ": " + run.abort_reason);
    r.points.push_back({beta, accuracy(run.network, data.val)});
    const std::size_t idx = r.points.size() - 1;
    if (!best || select_best({r.points[*best], r.points[idx]}) == 1) {
      best = idx;
      r.best_run = std::move(run);
    }
  }
  r.best = *best;
  r.test_accuracy = accuracy(r.best_run.network, data.test);
  return r;
}

/// Writes sweep.csv (every grid point, validation only), summary.csv (the
/// selected beta with its test accuracy) and the selected checkpoint.
inline SweepResult cmd_sweep(const ExperimentConfig& c, const fs::path& out) {
  const auto grid = sweep_grid(c);
  const auto data = load_data(c);
  auto r = run_sweep(c, data, grid);
  std::ostringstream sweep, summary;
  sweep << "beta,val_acc,selected\n" << std::setprecision(10);
  for (std::size_t i = 0; i < r.points.size(); ++i) {
    sweep << r.points[i].beta << ',' << r.points[i].val_accuracy << ',' << (i == r.best ? 1 : 0) << '\n';
  }
  summary << "regularizer,beta,val_acc,test_acc\n" << std::setprecision(10)
          << to_string(c.regularizer.kind) << ',' << r.points[r.best].beta << ','
          << r.points[r.best].val_accuracy << ',' << r.test_accuracy << '\n';
  fs::create_directories(out);
  write_file(out / "sweep.csv", sweep.str());
  write_file(out / "summary.csv", summary.str());
  ExperimentConfig chosen = c;
  chosen.regularizer.beta = r.points[r.best].beta;
  save_checkpoint(make_checkpoint(chosen, r.best_run.network, r.best_run.shade, r.best_run.metrics.size()),
                  out / "checkpoint.bin");
  return r;
}

inline const data::Dataset& split_of(const DataSplits& d, data::Split s) {
  switch (s) {
    case data::Split::Train: return d.train;
    case data::Split::Val: return d.val;
    case data::Split::Test: return d.test;
  }
  return d.test;
}

inline data::Split parse_split(const std::string& s) {
  if (s == "train") return data::Split::Train;
  if (s == "val") return data::Split::Val;
  if (s == "test") return data::Split::Test;
  throw ConfigError("unknown split '" + s + "'");
}

/// Per-unit entropy estimates and variance bounds for every regularized
/// layer, columns quantity,layer,unit,estimate,bound,gap,K,bins.
inline std::string diagnose_csv(const Network& net, const data::Dataset& d) {
  std::ostringstream os;
  os << "quantity,layer,unit,estimate,bound,gap,K,bins\n" << std::setprecision(10);
  for (std::size_t l = 0; l < net.regularized_layers().size(); ++l) {
    for (const auto& u : info::monitor_conditional_entropy(net, d, l)) {
      const std::pair<const char*, std::pair<double, double>> rows[] = {
          {"h_y", {u.h_y, u.bound_y}},
          {"h_y_given_c", {u.h_y_given_c, u.bound_y_given_c}},
          {"h_y_given_z", {u.h_y_given_z, u.bound_y_given_z}}};
      for (const auto& [name, v] : rows) {
        const double bound = u.degenerate ? 0.0 : v.second;
        os << name << ',' << l << ',' << u.unit << ',' << v.first << ',' << bound << ','
           << bound - v.first << ',' << u.samples << ',' << info::kDefaultBins << '\n';
      }
    }
  }
  return os.str();
}

inline std::string cmd_diagnose(const Checkpoint& ck, const ExperimentConfig& c, data::Split split,
                                const fs::path& out) {
  const auto data = load_data(c);
  Network net = ck.network;
  const auto& d = split_of(data, split);
  check_compatible(net, d);
  const auto csv = diagnose_csv(net, d);
  write_file(out / "diagnose.csv", csv);
  return csv;
}

inline VerifyReport cmd_verify(const std::string& scope, std::uint64_t seed, const fs::path& out) {
  auto report = run_verify(scope, seed);
  std::ostringstream os;
  report.write_csv(os);
  write_file(out / "verify.csv", os.str());
  return report;
}

struct BinarizeResult {
  std::size_t layer = 0;  // regularized-layer ordinal
  std::vector<double> thresholds;
  double accuracy_before = 0.0;
  double accuracy_raw = 0.0;    // after replacement, before fine-tuning
  double accuracy_after = 0.0;  // after fine-tuning
  Network network;
};

/// Replaces the ReLU of regularized layer `layer` with the binary activation
/// (thresholds from the training split), then fine-tunes the layers above
/// with cross-entropy only at learning rate x lr_scale.
inline BinarizeResult run_binarize(const Network& trained, const ExperimentConfig& c,
                                   const DataSplits& data, std::optional<std::size_t> layer) {
  BinarizeResult r;
  r.network = trained;
  const auto& reg = r.network.regularized_layers();
  if (reg.empty()) throw ConfigError("binarize: network has no hidden activation layer");
  r.layer = layer.value_or(reg.size() - 1);
  if (r.layer >= reg.size()) {
    throw ConfigError("binarize: layer " + std::to_string(r.layer) + " out of range (" +
                      std::to_string(reg.size()) + " hidden layers)");
  }
  r.accuracy_before = accuracy(r.network, data.test);
  r.thresholds = binarize_layer(r.network, reg[r.layer], data.train.inputs);
  r.accuracy_raw = accuracy(r.network, data.test);

  ExperimentConfig f = c;
  f.regularizer = RegularizerConfig{};
  f.epochs = c.binarize.fine_tune_epochs;
  f.optimizer.learning_rate *= c.binarize.lr_scale;
  f.monitor = false;
  TrainOptions opts;
  opts.evaluate_each_epoch = false;
  auto tuned = train(f, data, r.network, opts);
  if (tuned.aborted) throw NumericAbort("binarize: " + tuned.abort_reason);
  r.network = std::move(tuned.network);
  r.accuracy_after = accuracy(r.network, data.test);
  return r;
}

inline BinarizeResult cmd_binarize(const Checkpoint& ck, const ExperimentConfig& c, const fs::path& out) {
  const auto data = load_data(c);
  Network net = ck.network;
  check_compatible(net, data.train);
  auto r = run_binarize(net, c, data, c.binarize.layer);
  double mean_thr = 0.0;
  for (double t : r.thresholds) mean_thr += t;
  mean_thr /= static_cast<double>(r.thresholds.size());
  std::ostringstream os;
  os << "layer,fine_tune_epochs,mean_threshold,acc_before,acc_raw,acc_after,delta\n"
     << std::setprecision(10) << r.layer << ',' << c.binarize.fine_tune_epochs << ',' << mean_thr << ','
     << r.accuracy_before << ',' << r.accuracy_raw << ',' << r.accuracy_after << ','
     << r.accuracy_after - r.accuracy_before << '\n';
  write_file(out / "binarize.csv", os.str());
  auto meta = ck.metadata;
  meta["binarized_layer"] = r.layer;
  save_checkpoint(Checkpoint{r.network, ck.shade, meta}, out / "checkpoint_binarized.bin");
  return r;
}

/// Accuracy and mean cross-entropy on each split.
inline std::string cmd_eval(const Checkpoint& ck, const ExperimentConfig& c, const fs::path& out) {
  const auto data = load_data(c);
  Network net = ck.network;
  check_compatible(net, data.test);
  std::ostringstream os;
  os << "split,accuracy,loss,n\n" << std::setprecision(10);
  for (auto s : {data::Split::Train, data::Split::Val, data::Split::Test}) {
    const auto& d = split_of(data, s);
    if (d.size() == 0) continue;
    const auto logits = net.forward(d.inputs).logits;
    os << data::to_string(s) << ',' << accuracy(net, d) << ',' << cross_entropy(logits, d.labels).loss
       << ',' << d.size() << '\n';
  }
  write_file(out / "eval.csv", os.str());
  return os.str();
}

}  // namespace shade::experiment

#endif  // SHADE_EXPERIMENT_COMMANDS_HPP
