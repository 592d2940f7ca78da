#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "shade/shade.hpp"

using namespace shade;
using namespace shade::experiment;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.hidden = {8, 6};
  c.dataset.synthetic.kind = data::SyntheticKind::GaussianBlobs;
  c.dataset.synthetic.classes = 4;
  c.dataset.synthetic.signal_dims = 4;
  c.dataset.synthetic.nuisance_dims = 4;
  c.dataset.synthetic.separation = 2.0;
  c.dataset.train_size = 200;
  c.dataset.val_size = 100;
  c.dataset.test_size = 100;
  c.epochs = 2;
  c.batch_size = 25;
  c.seed = 5;
  return c;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "shade_test_experiment" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void expect_same_parameters(Network a, Network b) {
  auto pa = a.all_parameters(), pb = b.all_parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(*pa[i].value, *pb[i].value);
}

std::string metrics_text(const TrainResult& r) {
  std::ostringstream os;
  write_metrics_csv(os, r.metrics, r.network.regularized_layers().size());
  return os.str();
}

}  // namespace

TEST(Trainer, ShadeWithZeroBetaMatchesNoRegularizer) {
  auto c = small_config();
  const auto data = load_data(c);
  c.regularizer.kind = RegularizerKind::None;
  const auto none = train(c, data);
  c.regularizer.kind = RegularizerKind::Shade;
  c.regularizer.beta = 0.0;
  const auto shade0 = train(c, data);
  expect_same_parameters(none.network, shade0.network);
  ASSERT_TRUE(shade0.shade.has_value());
  EXPECT_NE(shade0.shade->unit(0, 0).mu1, 1.0);
}

TEST(Trainer, ZeroEpochsReturnsInitialization) {
  auto c = small_config();
  c.epochs = 0;
  const auto data = load_data(c);
  const auto r = train(c, data);
  EXPECT_TRUE(r.metrics.empty());
  Rng master(c.seed);
  Rng init = master.split();
  expect_same_parameters(r.network, build_network(c, data.train.sample_shape(), 4, init));
}

TEST(Trainer, SameSeedGivesIdenticalMetrics) {
  auto c = small_config();
  c.regularizer.kind = RegularizerKind::Shade;
  c.regularizer.beta = 1e-2;
  const auto data = load_data(c);
  const auto a = train(c, data), b = train(c, data);
  EXPECT_EQ(metrics_text(a), metrics_text(b));
  c.seed = 6;
  EXPECT_NE(metrics_text(train(c, data)), metrics_text(a));
}

TEST(Trainer, MetricsCsvHasPerLayerColumns) {
  auto c = small_config();
  c.epochs = 1;
  const auto r = train(c, load_data(c));
  const auto text = metrics_text(r);
  EXPECT_EQ(text.substr(0, text.find('\n')),
            "epoch,train_loss,train_acc,val_acc,test_acc,omega,h_y_given_c_l0,h_y_given_c_l1,"
            "h_y_given_z_l0,h_y_given_z_l1");
  ASSERT_EQ(r.metrics.size(), 1u);
  EXPECT_EQ(r.metrics[0].h_y_given_c.size(), 2u);
}

TEST(Trainer, LearnsSeparableBlobs) {
  auto c = small_config();
  c.epochs = 10;
  c.optimizer.learning_rate = 1e-2;
  const auto data = load_data(c);
  const auto r = train(c, data);
  EXPECT_GT(accuracy(r.network, data.test), 0.6);
  EXPECT_LT(r.metrics.back().train_loss, r.metrics.front().train_loss);
}

TEST(Trainer, WeightDecayShrinksWeights) {
  auto c = small_config();
  const auto data = load_data(c);
  const auto plain = train(c, data);
  c.regularizer.kind = RegularizerKind::WeightDecay;
  c.regularizer.beta = 0.5;
  const auto decayed = train(c, data);
  Network a = plain.network, b = decayed.network;
  EXPECT_LT(weight_decay_loss(b), weight_decay_loss(a));
}

TEST(Trainer, ConvnetTrainsOnSquareView) {
  auto c = small_config();
  c.architecture = Architecture::Convnet;
  c.dataset.synthetic.nuisance_dims = 12;  // 16 inputs viewed as 1x4x4
  c.conv_stages = {{3, 3, 1}};
  c.epochs = 1;
  const auto data = load_data(c);
  EXPECT_EQ(data.train.sample_shape(), (Shape{1, 4, 4}));
  c.regularizer.kind = RegularizerKind::Shade;
  c.regularizer.beta = 1e-3;
  const auto r = train(c, data);
  EXPECT_EQ(r.metrics.size(), 1u);
  EXPECT_EQ(r.shade->num_units(0), 3u);
}

TEST(Trainer, SubsetIsAppliedToTrainingOnly) {
  auto c = small_config();
  c.subset = data::SubsetSpec{40, 2};
  const auto data = load_data(c);
  EXPECT_EQ(data.train.size(), 40u);
  EXPECT_EQ(data.val.size(), 100u);
  for (auto n : data.train.class_counts()) EXPECT_EQ(n, 10u);
}

TEST(Sweep, TieGoesToSmallerBeta) {
  const std::vector<SweepPoint> pts{{1e-3, 0.8}, {1e-5, 0.9}, {1e-4, 0.9}, {1e-6, 0.85}};
  EXPECT_EQ(select_best(pts), 1u);
  const std::vector<SweepPoint> tie{{1e-2, 0.5}, {1e-7, 0.5}};
  EXPECT_EQ(select_best(tie), 1u);
  EXPECT_THROW(select_best({}), ConfigError);
}

TEST(Sweep, GridSelectionAndEmptyGrid) {
  auto c = small_config();
  EXPECT_THROW(sweep_grid(c), ConfigError);
  c.regularizer.kind = RegularizerKind::Shade;
  EXPECT_EQ(sweep_grid(c), default_beta_grid());
  c.beta_grid = {1e-3};
  EXPECT_EQ(sweep_grid(c), (std::vector<double>{1e-3}));
  EXPECT_THROW(run_sweep(c, load_data(c), {}), ConfigError);
}

TEST(Sweep, IdenticalConfigsTieOnTheSmallerBeta) {
  // With kind none, beta has no effect, so every run is the same model.
  auto c = small_config();
  c.epochs = 1;
  const auto r = run_sweep(c, load_data(c), {1e-2, 1e-4, 1e-3});
  EXPECT_EQ(r.points[0].val_accuracy, r.points[1].val_accuracy);
  EXPECT_EQ(r.best, 1u);
}

TEST(Binarize, ZeroFineTuneEpochsKeepsRawAccuracy) {
  auto c = small_config();
  c.epochs = 3;
  c.binarize.fine_tune_epochs = 0;
  const auto data = load_data(c);
  const auto trained = train(c, data);
  const auto r = run_binarize(trained.network, c, data, std::nullopt);
  EXPECT_EQ(r.layer, 1u);
  EXPECT_EQ(r.thresholds.size(), 6u);
  EXPECT_EQ(r.accuracy_after, r.accuracy_raw);
  EXPECT_THROW(run_binarize(trained.network, c, data, 2), ConfigError);
}

TEST(Binarize, FineTuningLeavesFrozenLayersUntouched) {
  auto c = small_config();
  c.binarize.fine_tune_epochs = 2;
  const auto data = load_data(c);
  const auto trained = train(c, data);
  const auto r = run_binarize(trained.network, c, data, 0);
  EXPECT_EQ(std::get<Dense>(r.network.layer(0)).weight, std::get<Dense>(trained.network.layer(0)).weight);
  EXPECT_NE(std::get<Dense>(r.network.layer(4)).weight, std::get<Dense>(trained.network.layer(4)).weight);
}

TEST(Commands, TrainWritesArtifactsAndRerunsByteIdentically) {
  auto c = small_config();
  c.regularizer.kind = RegularizerKind::Shade;
  c.regularizer.beta = 1e-3;
  const auto a = scratch("train_a"), b = scratch("train_b");
  cmd_train(c, a);
  cmd_train(c, b);
  for (const char* f : {"config.json", "metrics.csv", "timing.log", "checkpoint.bin", "shade_state.csv"})
    EXPECT_TRUE(fs::exists(a / f)) << f;
  EXPECT_EQ(slurp(a / "metrics.csv"), slurp(b / "metrics.csv"));
  EXPECT_EQ(slurp(a / "checkpoint.bin"), slurp(b / "checkpoint.bin"));
  const auto ck = load_checkpoint(a / "checkpoint.bin");
  EXPECT_EQ(ck.metadata.at("epochs_completed"), 2);
  EXPECT_EQ(to_json(checkpoint_config(ck)), to_json(c));
}

TEST(Commands, DiagnoseAndEvalUseTheCheckpoint) {
  auto c = small_config();
  const auto dir = scratch("diag");
  cmd_train(c, dir);
  const auto ck = load_checkpoint(dir / "checkpoint.bin");
  const auto csv = cmd_diagnose(ck, c, data::Split::Val, dir);
  std::istringstream lines(csv);
  std::string header;
  std::getline(lines, header);
  EXPECT_EQ(header, "quantity,layer,unit,estimate,bound,gap,K,bins");
  std::size_t rows = 0;
  for (std::string l; std::getline(lines, l);) ++rows;
  EXPECT_EQ(rows, 3u * (8 + 6));
  const auto eval = cmd_eval(ck, c, dir);
  EXPECT_EQ(eval.substr(0, eval.find('\n')), "split,accuracy,loss,n");
  EXPECT_TRUE(fs::exists(dir / "eval.csv"));
}

TEST(Commands, IncompatibleCheckpointIsRejected) {
  auto c = small_config();
  const auto dir = scratch("incompat");
  cmd_train(c, dir);
  const auto ck = load_checkpoint(dir / "checkpoint.bin");
  c.dataset.synthetic.nuisance_dims = 5;
  EXPECT_THROW(cmd_eval(ck, c, dir), ConfigError);
}

TEST(Commands, DivergentTrainingAbortsAfterSavingLastGoodState) {
  auto c = small_config();
  c.optimizer.kind = OptimizerKind::SgdMomentum;
  c.optimizer.learning_rate = 1e200;
  c.epochs = 3;
  const auto dir = scratch("abort");
  EXPECT_THROW(cmd_train(c, dir), NumericAbort);
  EXPECT_TRUE(fs::exists(dir / "checkpoint.bin"));
  const auto ck = load_checkpoint(dir / "checkpoint.bin");
  for (auto& p : Network(ck.network).all_parameters()) EXPECT_TRUE(p.value->all_finite());
}

TEST(Verify, AlgorithmScopePassesAndUnknownScopeThrows) {
  const auto r = run_verify("algorithm1");
  EXPECT_TRUE(r.passed());
  EXPECT_FALSE(r.checks.empty());
  EXPECT_THROW(run_verify("everything"), std::invalid_argument);
  std::ostringstream os;
  r.write_csv(os);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "scope,check,measured,limit,passed");
}
