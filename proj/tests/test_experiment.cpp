#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ace/experiment.hpp"

using namespace ace;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ace_experiment_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Rows of a CSV with text cells, header included.
std::vector<std::vector<std::string>> text_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

ExperimentConfig quick_sets(const fs::path& dir) {
  ExperimentConfig c;
  c.task = "set_regression";
  c.n_samples = 30;
  c.epsilon = 0.25;
  c.train.epochs = 4;
  c.output_dir = dir.string();
  return c;
}

}  // namespace

TEST(Experiment, UnknownKeysAndBadTypesAreRejected) {
  EXPECT_THROW(experiment_from_json(Json{{"epoch", 3}}), ConfigError);
  EXPECT_THROW(experiment_from_json(Json{{"epochs", "three"}}), ConfigError);
  EXPECT_THROW(experiment_from_json(Json{{"epochs", -1}}), ConfigError);
  EXPECT_THROW(experiment_from_json(Json{{"mode", "loose"}}), ConfigError);
  EXPECT_THROW(experiment_from_json(Json{{"task", "mnist"}}), ConfigError);
  EXPECT_THROW(experiment_from_json(Json{{"eta_p", 0.0}}), ConfigError);
  try {
    experiment_from_json(Json{{"epoch", 3}});
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("epochs"), std::string::npos);
  }
}

TEST(Experiment, JsonRoundTripCoversEveryKey) {
  ExperimentConfig c;
  c.train.eta_d = 0.003;
  c.train.spectral_norm = false;
  c.data_seed = 12;
  const Json j = experiment_to_json(c);
  EXPECT_EQ(j.size(), experiment_keys().size());
  EXPECT_EQ(experiment_to_json(experiment_from_json(j)).dump(), j.dump());
}

TEST(Experiment, OverridePrecedence) {
  const fs::path dir = scratch("precedence");
  {
    std::ofstream f(dir / "cfg.json");
    f << R"({"seed": 1, "epochs": 2, "output_dir": "x"})";
  }
  EXPECT_EQ(load_experiment(dir / "cfg.json", {}, std::nullopt).train.seed, 1u);
  EXPECT_EQ(load_experiment(dir / "cfg.json", {}, std::string("7")).train.seed, 7u);
  EXPECT_EQ(load_experiment(dir / "cfg.json", {"seed=9"}, std::string("7")).train.seed, 9u);
  const auto c = load_experiment(dir / "cfg.json", {"mode=resilient", "eta_d=null", "target=rectangle"}, std::nullopt);
  EXPECT_EQ(c.train.mode, TrainMode::resilient);
  EXPECT_FALSE(c.train.eta_d.has_value());
  EXPECT_EQ(c.target, "rectangle");
  EXPECT_THROW(load_experiment(dir / "cfg.json", {"novalue"}, std::nullopt), ConfigError);
  EXPECT_THROW(load_experiment(dir / "cfg.json", {}, std::string("abc")), ConfigError);
  EXPECT_THROW(load_experiment(dir / "missing.json", {}, std::nullopt), ConfigError);
}

TEST(Experiment, ScalarToyDefaultsFollowToyKind) {
  const auto c = experiment_from_json(Json{{"task", "scalar_toy"}, {"toy_kind", "resilient"}});
  EXPECT_EQ(c.train.mode, TrainMode::resilient);
  EXPECT_TRUE(c.train.freeze_theta);
}

TEST(Experiment, TrainingWritesAllArtifacts) {
  const fs::path dir = scratch("artifacts");
  std::ostringstream log;
  const auto out = run_training(quick_sets(dir), log);
  EXPECT_EQ(out.exit_code, 0);
  for (const char* f : {"trace.csv", "summary.json", "checkpoint.bin", "gamma.svg", "lambda.svg", "u.svg",
                        "eq_error.svg"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  const Json summary = Json::parse(slurp(dir / "summary.json"));
  for (const char* key : {"loss_val_raw", "loss_val_proj", "test_loss_raw", "test_loss_proj", "max_abs_gamma",
                          "eq_error_exact", "thm1_refined", "thm2_refined", "probe_thm1_coarse", "probe_thm2_coarse",
                          "probe_delta_recursion", "probe_epsilon_recursion", "diverged"})
    EXPECT_TRUE(summary.contains(key)) << key;
}

TEST(Experiment, PlotsAreDerivedFromTraceOnly) {
  const fs::path dir = scratch("replot");
  std::ostringstream log;
  run_training(quick_sets(dir), log);
  const fs::path again = dir / "again";
  EXPECT_EQ(cmd_plot(dir / "trace.csv", again, log), 0);
  for (const char* f : {"gamma.svg", "lambda.svg", "u.svg", "eq_error.svg"})
    EXPECT_EQ(slurp(dir / f), slurp(again / f)) << f;
}

TEST(Experiment, ResumeMatchesUninterrupted) {
  const fs::path a = scratch("resume_full"), b = scratch("resume_half");
  std::ostringstream log;
  auto full = quick_sets(a);
  full.train.epochs = 6;
  run_training(full, log);
  auto half = quick_sets(b);
  half.train.epochs = 3;
  run_training(half, log);
  resume_training(b / "checkpoint.bin", {"epochs=6"}, log);
  EXPECT_EQ(slurp(a / "trace.csv"), slurp(b / "trace.csv"));
}

TEST(Experiment, VerifyBoundsWritesCsvAndPasses) {
  const fs::path dir = scratch("verify");
  ExperimentConfig c;
  c.n_models = 12;
  c.output_dir = dir.string();
  std::ostringstream log;
  EXPECT_EQ(cmd_verify_bounds(c, log), 0) << log.str();
  const auto t = text_csv(dir / "bounds.csv");
  EXPECT_EQ(t.size(), 25u);
  EXPECT_EQ(t[0], (std::vector<std::string>{"sample", "seed", "family", "layers", "bound_family", "measured",
                                             "recursion", "refined", "coarse"}));
}

TEST(Experiment, OrderedToleratesRoundingOnly) {
  EXPECT_TRUE(ordered(1.0, 1.0));
  EXPECT_TRUE(ordered(1.0 + 1e-12, 1.0));
  EXPECT_FALSE(ordered(1.0 + 1e-6, 1.0));
  EXPECT_TRUE(ordered(0.0, 0.0));
}

TEST(Experiment, SweepRecordsEveryValue) {
  const fs::path dir = scratch("sweep");
  auto c = quick_sets(dir);
  std::ostringstream log;
  EXPECT_EQ(cmd_sweep(c, "gamma_init", {0.0, 1.0}, log), 0) << log.str();
  const auto t = text_csv(dir / "sweep.csv");
  ASSERT_EQ(t.size(), 3u);
  EXPECT_EQ(t[1][2], "ok");
  EXPECT_TRUE(fs::exists(dir / "sweep.svg"));
  EXPECT_TRUE(fs::exists(dir / "gamma_init=0" / "trace.csv"));
  EXPECT_THROW(cmd_sweep(c, "batch_size", {1.0}, log), ConfigError);
}

TEST(Experiment, SweepContinuesPastFailures) {
  const fs::path dir = scratch("sweep_fail");
  auto c = quick_sets(dir);
  c.train.mode = TrainMode::resilient;
  std::ostringstream log;
  // rho = -1 is rejected by validation; the other value still runs.
  EXPECT_NE(cmd_sweep(c, "rho", {-1.0, 1.0}, log), 0);
  const auto t = text_csv(dir / "sweep.csv");
  ASSERT_EQ(t.size(), 3u);
  EXPECT_EQ(t[0][2], "status");
  EXPECT_EQ(t[1][2], "error");
  EXPECT_EQ(t[2][2], "ok");
}
