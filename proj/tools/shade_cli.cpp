// shade: train, sweep, diagnose, verify, binarize, eval.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 verification
// failure, 3 numeric abort (non-finite loss).

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "shade/shade.hpp"

namespace {

namespace ex = shade::experiment;
namespace fs = std::filesystem;

enum Exit { kOk = 0, kUsage = 1, kVerifyFailed = 2, kNumericAbort = 3 };

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string scope = "all";
  std::string checkpoint;
  std::string split = "test";
  std::optional<std::size_t> layer;
  std::optional<std::size_t> epochs;
};

ex::ExperimentConfig resolve_config(const Options& o) {
  if (o.config.empty()) throw ex::ConfigError("--config is required");
  auto c = ex::load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  return c;
}

fs::path out_dir(const Options& o, const std::optional<ex::ExperimentConfig>& c) {
  if (!o.out.empty()) return o.out;
  return c ? fs::path(c->output_dir) : fs::path("out");
}

/// Checkpoint plus the config to evaluate it with: --config if given,
/// otherwise the config recorded in the checkpoint.
std::pair<shade::Checkpoint, ex::ExperimentConfig> load_run(const Options& o) {
  std::optional<ex::ExperimentConfig> cfg;
  if (!o.config.empty()) cfg = resolve_config(o);
  const fs::path ckpt = !o.checkpoint.empty() ? fs::path(o.checkpoint) : out_dir(o, cfg) / "checkpoint.bin";
  auto ck = shade::load_checkpoint(ckpt);
  if (!cfg) {
    cfg = ex::checkpoint_config(ck);
    if (o.seed) cfg->seed = *o.seed;
  }
  return {std::move(ck), *cfg};
}

int run_train(const Options& o) {
  const auto c = resolve_config(o);
  const auto out = out_dir(o, c);
  const auto s = ex::cmd_train(c, out);
  std::cout << "trained " << s.result.metrics.size() << " epochs; val_acc=" << s.final_val_accuracy
            << " test_acc=" << s.final_test_accuracy << "; wrote " << out.string() << "\n";
  return kOk;
}

int run_sweep(const Options& o) {
  const auto c = resolve_config(o);
  const auto out = out_dir(o, c);
  const auto r = ex::cmd_sweep(c, out);
  std::cout << "selected beta=" << r.points[r.best].beta << " val_acc=" << r.points[r.best].val_accuracy
            << " test_acc=" << r.test_accuracy << "; wrote " << out.string() << "\n";
  return kOk;
}

int run_diagnose(const Options& o) {
  const auto [ck, c] = load_run(o);
  const auto out = out_dir(o, c);
  ex::cmd_diagnose(ck, c, ex::parse_split(o.split), out);
  std::cout << "wrote " << (out / "diagnose.csv").string() << "\n";
  return kOk;
}

int run_verify(const Options& o) {
  const auto out = o.out.empty() ? fs::path("out") : fs::path(o.out);
  const auto report = ex::cmd_verify(o.scope, o.seed.value_or(1), out);
  for (const auto& c : report.checks) {
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.scope << "/" << c.name << " measured=" << c.measured
              << " limit=" << c.limit << "\n";
  }
  return report.passed() ? kOk : kVerifyFailed;
}

int run_binarize(const Options& o) {
  auto [ck, c] = load_run(o);
  if (o.layer) c.binarize.layer = *o.layer;
  if (o.epochs) c.binarize.fine_tune_epochs = *o.epochs;
  const auto out = out_dir(o, c);
  const auto r = ex::cmd_binarize(ck, c, out);
  std::cout << "layer " << r.layer << ": acc " << r.accuracy_before << " -> raw " << r.accuracy_raw
            << " -> fine-tuned " << r.accuracy_after << "\n";
  return kOk;
}

int run_eval(const Options& o) {
  const auto [ck, c] = load_run(o);
  std::cout << ex::cmd_eval(ck, c, out_dir(o, c));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SHADE regularizer experiments and information-theory checks"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "experiment config (JSON)");
    sub->add_option("--seed", o.seed, "override the config seed");
    sub->add_option("--out", o.out, "output directory");
  };
  auto add_checkpoint = [&](CLI::App* sub) {
    sub->add_option("--checkpoint", o.checkpoint, "checkpoint path (default <out>/checkpoint.bin)");
  };

  auto* train = app.add_subcommand("train", "train one model");
  add_common(train);
  auto* sweep = app.add_subcommand("sweep", "train over a beta grid and select on validation");
  add_common(sweep);
  auto* diagnose = app.add_subcommand("diagnose", "per-unit entropy estimates and bounds");
  add_common(diagnose);
  add_checkpoint(diagnose);
  diagnose->add_option("--split", o.split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  auto* verify = app.add_subcommand("verify", "dataset-free verification suites");
  verify->add_option("--scope", o.scope, "algorithm1, gradients, bounds, dpi, reconstruction or all");
  verify->add_option("--seed", o.seed, "seed for the random instances");
  verify->add_option("--out", o.out, "output directory");
  auto* binarize = app.add_subcommand("binarize", "binary activation on one layer, then fine-tune");
  add_common(binarize);
  add_checkpoint(binarize);
  binarize->add_option("--layer", o.layer, "hidden layer ordinal (default: last)");
  binarize->add_option("--epochs", o.epochs, "fine-tune epochs");
  auto* eval = app.add_subcommand("eval", "accuracy and loss per split");
  add_common(eval);
  add_checkpoint(eval);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*train) return run_train(o);
    if (*sweep) return run_sweep(o);
    if (*diagnose) return run_diagnose(o);
    if (*verify) return run_verify(o);
    if (*binarize) return run_binarize(o);
    if (*eval) return run_eval(o);
  } catch (const ex::NumericAbort& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    return kNumericAbort;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
