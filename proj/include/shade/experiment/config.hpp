#ifndef SHADE_EXPERIMENT_CONFIG_HPP
#define SHADE_EXPERIMENT_CONFIG_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "shade/baseline_regularizer.hpp"
#include "shade/data/synthetic.hpp"
#include "shade/network.hpp"
#include "shade/optimizer.hpp"

namespace shade::experiment {

/// Malformed or inconsistent configuration (CLI exit code 1).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Architecture { Mlp, Convnet };

struct DatasetConfig {
  std::string source = "synthetic";  // "synthetic" or "idx"
  data::SyntheticSpec synthetic;
  std::size_t train_size = 4000;
  std::size_t val_size = 1000;
  std::size_t test_size = 2000;
  std::uint64_t data_seed = 7;
  // idx sources; validation is carved from the end of the training file
  // unless explicit validation files are given.
  std::string train_images, train_labels, test_images, test_labels, val_images, val_labels;
  std::size_t num_classes = 0;  // idx only; 0 = infer
  std::vector<std::size_t> image_shape;  // [C, H, W] view for the convnet; empty = natural
};

struct BinarizeConfig {
  std::optional<std::size_t> layer;  // regularized-layer ordinal; default last hidden layer
  std::size_t fine_tune_epochs = 10;
  double lr_scale = 0.1;
};

struct ExperimentConfig {
  Architecture architecture = Architecture::Mlp;
  std::vector<std::size_t> hidden{64, 256};
  std::vector<ConvStage> conv_stages{{16, 5, 2}, {16, 3, 1}, {16, 3, 1}};
  DatasetConfig dataset;
  std::optional<data::SubsetSpec> subset;
  OptimizerConfig optimizer;
  RegularizerConfig regularizer;
  std::size_t epochs = 30;
  std::size_t batch_size = 50;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  bool monitor = true;  // per-epoch entropy columns
  std::vector<double> beta_grid;  // sweep grid; empty = default for the regularizer
  BinarizeConfig binarize;
};

/// beta in {1, 5} x 10^-i, i = 1..7, ascending.
inline std::vector<double> default_beta_grid() {
  std::vector<double> g;
  for (int i = 7; i >= 1; --i) {
    const double p = std::pow(10.0, -i);
    g.push_back(p);
    g.push_back(5.0 * p);
  }
  return g;
}

/// beta in 10^-i, i = 1..7, ascending (limited-sample protocol).
inline std::vector<double> decade_beta_grid() {
  std::vector<double> g;
  for (int i = 7; i >= 1; --i) g.push_back(std::pow(10.0, -i));
  return g;
}

namespace detail {

/// Object view that rejects keys nobody asked for.
class Strict {
 public:
  Strict(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  /// Throws on any key that was never looked up.
  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(where_ + ": unknown key '" + key + "'");
    }
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  const nlohmann::json& at(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  ExperimentConfig c;
  detail::Strict top(j, "config");

  std::string arch = "mlp";
  top.get("architecture", arch);
  if (arch == "mlp") c.architecture = Architecture::Mlp;
  else if (arch == "convnet") c.architecture = Architecture::Convnet;
  else throw ConfigError("config.architecture: unknown '" + arch + "'");
  top.get("hidden", c.hidden);
  if (top.has("conv_stages")) {
    c.conv_stages.clear();
    for (const auto& s : top.at("conv_stages")) {
      detail::Strict st(s, "config.conv_stages[]");
      ConvStage stage{16, 3, 1};
      st.get("channels", stage.channels);
      st.get("kernel", stage.kernel);
      st.get("padding", stage.padding);
      st.finish();
      c.conv_stages.push_back(stage);
    }
  }

  if (top.has("dataset")) {
    detail::Strict d(top.at("dataset"), "config.dataset");
    auto& ds = c.dataset;
    d.get("source", ds.source);
    if (ds.source != "synthetic" && ds.source != "idx") {
      throw ConfigError("config.dataset.source: unknown '" + ds.source + "'");
    }
    std::string kind = data::to_string(ds.synthetic.kind);
    d.get("kind", kind);
    try {
      ds.synthetic.kind = data::parse_synthetic_kind(kind);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config.dataset.kind: ") + e.what());
    }
    d.get("classes", ds.synthetic.classes);
    d.get("signal_dims", ds.synthetic.signal_dims);
    d.get("nuisance_dims", ds.synthetic.nuisance_dims);
    d.get("separation", ds.synthetic.separation);
    d.get("signal_noise", ds.synthetic.signal_noise);
    d.get("nuisance_scale", ds.synthetic.nuisance_scale);
    d.get("texture_rank", ds.synthetic.texture_rank);
    d.get("structure_seed", ds.synthetic.structure_seed);
    d.get("train_size", ds.train_size);
    d.get("val_size", ds.val_size);
    d.get("test_size", ds.test_size);
    d.get("data_seed", ds.data_seed);
    d.get("train_images", ds.train_images);
    d.get("train_labels", ds.train_labels);
    d.get("test_images", ds.test_images);
    d.get("test_labels", ds.test_labels);
    d.get("val_images", ds.val_images);
    d.get("val_labels", ds.val_labels);
    d.get("num_classes", ds.num_classes);
    d.get("image_shape", ds.image_shape);
    d.finish();
    if (ds.synthetic.nuisance_dims < 0) throw ConfigError("config.dataset.nuisance_dims: must be >= 0");
  }

  if (top.has("subset")) {
    detail::Strict s(top.at("subset"), "config.subset");
    data::SubsetSpec spec;
    s.get("size", spec.size);
    s.get("seed", spec.seed);
    s.finish();
    c.subset = spec;
  }

  if (top.has("optimizer")) {
    detail::Strict o(top.at("optimizer"), "config.optimizer");
    std::string kind = to_string(c.optimizer.kind);
    o.get("kind", kind);
    try {
      c.optimizer.kind = parse_optimizer_kind(kind);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config.optimizer.kind: ") + e.what());
    }
    if (c.optimizer.kind == OptimizerKind::SgdMomentum) {
      c.optimizer.learning_rate = 0.01;
      c.optimizer.lr_decay = 0.9999;
    }
    o.get("learning_rate", c.optimizer.learning_rate);
    o.get("lr_decay", c.optimizer.lr_decay);
    o.get("momentum", c.optimizer.momentum);
    o.get("beta1", c.optimizer.beta1);
    o.get("beta2", c.optimizer.beta2);
    o.get("epsilon", c.optimizer.epsilon);
    o.finish();
  }

  if (top.has("regularizer")) {
    detail::Strict r(top.at("regularizer"), "config.regularizer");
    std::string kind = to_string(c.regularizer.kind);
    r.get("kind", kind);
    try {
      c.regularizer.kind = parse_regularizer_kind(kind);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config.regularizer.kind: ") + e.what());
    }
    r.get("beta", c.regularizer.beta);
    r.get("layer_weights", c.regularizer.layer_weights);
    r.get("dropout_rates", c.regularizer.dropout_rates);
    r.get("decay", c.regularizer.decay);
    r.finish();
  }

  top.get("epochs", c.epochs);
  top.get("batch_size", c.batch_size);
  top.get("seed", c.seed);
  top.get("output_dir", c.output_dir);
  top.get("monitor", c.monitor);
  top.get("beta_grid", c.beta_grid);

  if (top.has("binarize")) {
    detail::Strict b(top.at("binarize"), "config.binarize");
    if (b.has("layer")) {
      std::size_t layer = 0;
      b.get("layer", layer);
      c.binarize.layer = layer;
    }
    b.get("fine_tune_epochs", c.binarize.fine_tune_epochs);
    b.get("lr_scale", c.binarize.lr_scale);
    b.finish();
  }

  top.finish();

  try {
    c.regularizer.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config.regularizer: ") + e.what());
  }
  if (c.batch_size == 0) throw ConfigError("config.batch_size: must be >= 1");
  if (!(c.optimizer.learning_rate > 0.0)) throw ConfigError("config.optimizer.learning_rate: must be > 0");
  return c;
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["architecture"] = c.architecture == Architecture::Mlp ? "mlp" : "convnet";
  j["hidden"] = c.hidden;
  j["conv_stages"] = nlohmann::json::array();
  for (const auto& s : c.conv_stages) {
    j["conv_stages"].push_back({{"channels", s.channels}, {"kernel", s.kernel}, {"padding", s.padding}});
  }
  const auto& ds = c.dataset;
  j["dataset"] = {{"source", ds.source},
                  {"kind", data::to_string(ds.synthetic.kind)},
                  {"classes", ds.synthetic.classes},
                  {"signal_dims", ds.synthetic.signal_dims},
                  {"nuisance_dims", ds.synthetic.nuisance_dims},
                  {"separation", ds.synthetic.separation},
                  {"signal_noise", ds.synthetic.signal_noise},
                  {"nuisance_scale", ds.synthetic.nuisance_scale},
                  {"texture_rank", ds.synthetic.texture_rank},
                  {"structure_seed", ds.synthetic.structure_seed},
                  {"train_size", ds.train_size},
                  {"val_size", ds.val_size},
                  {"test_size", ds.test_size},
                  {"data_seed", ds.data_seed},
                  {"train_images", ds.train_images},
                  {"train_labels", ds.train_labels},
                  {"test_images", ds.test_images},
                  {"test_labels", ds.test_labels},
                  {"val_images", ds.val_images},
                  {"val_labels", ds.val_labels},
                  {"num_classes", ds.num_classes},
                  {"image_shape", ds.image_shape}};
  if (c.subset) j["subset"] = {{"size", c.subset->size}, {"seed", c.subset->seed}};
  j["optimizer"] = {{"kind", to_string(c.optimizer.kind)},
                    {"learning_rate", c.optimizer.learning_rate},
                    {"lr_decay", c.optimizer.lr_decay},
                    {"momentum", c.optimizer.momentum},
                    {"beta1", c.optimizer.beta1},
                    {"beta2", c.optimizer.beta2},
                    {"epsilon", c.optimizer.epsilon}};
  j["regularizer"] = {{"kind", to_string(c.regularizer.kind)},
                      {"beta", c.regularizer.beta},
                      {"layer_weights", c.regularizer.layer_weights},
                      {"dropout_rates", c.regularizer.dropout_rates},
                      {"decay", c.regularizer.decay}};
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["monitor"] = c.monitor;
  j["beta_grid"] = c.beta_grid;
  j["binarize"] = {{"fine_tune_epochs", c.binarize.fine_tune_epochs}, {"lr_scale", c.binarize.lr_scale}};
  if (c.binarize.layer) j["binarize"]["layer"] = *c.binarize.layer;
  return j;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(j);
}

}  // namespace shade::experiment

#endif  // SHADE_EXPERIMENT_CONFIG_HPP
