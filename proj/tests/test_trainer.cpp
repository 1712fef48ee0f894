#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ace/checkpoint.hpp"
#include "ace/linalg.hpp"
#include "ace/metrics.hpp"
#include "ace/trainer.hpp"

using namespace ace;
using namespace ace::linalg;

namespace {

Dataset sets(double eps, std::uint64_t seed = 1) { return set_regression(4, 2, eps, 40, seed); }

HomotopicModel set_model(std::uint64_t seed = 3) {
  ModelSpec spec;
  spec.family = ModelSpec::Family::deepsets;
  spec.n_points = 4;
  spec.in_dim = 2;
  spec.out_dim = 2;
  spec.hidden_dim = 6;
  spec.seed = seed;
  return build_model(spec);
}

TrainConfig config(TrainMode mode, std::size_t epochs) {
  TrainConfig c;
  c.mode = mode;
  c.epochs = epochs;
  c.eta_p = 0.01;
  c.batch_size = 8;
  c.seed = 5;
  return c;
}

std::string csv(const TrainRun& run) {
  std::ostringstream os;
  write_trace_csv(run.trace, run.model.depth(), os);
  return os.str();
}

}  // namespace

TEST(Trainer, CsvHeaderSchema) {
  const auto h = trace_header(2);
  const std::vector<std::string> expected{"step",    "loss_train", "loss_val_raw", "loss_val_proj", "eq_error_exact",
                                          "gamma_1", "gamma_2",    "lambda_1",     "lambda_2",      "u_1",
                                          "u_2",     "thm1_refined", "thm2_refined"};
  EXPECT_EQ(h, expected);
}

TEST(Trainer, CsvUsesSeventeenSignificantDigits) {
  TraceRow r;
  r.loss_train = 0.1;
  r.gamma = {1.0 / 3.0};
  r.lambda = {0.0};
  r.u = {0.0};
  std::ostringstream os;
  write_trace_csv({r}, 1, os);
  std::string body = os.str().substr(os.str().find('\n') + 1);
  EXPECT_NE(body.find("0.10000000000000001"), std::string::npos) << body;
  EXPECT_NE(body.find("0.33333333333333331"), std::string::npos) << body;
}

TEST(Trainer, StrictLambdaIntegratesGammaAtEveryStep) {
  const Dataset ds = sets(0.25);
  std::vector<double> acc(2, 0.0);
  double worst = 0.0;
  auto cfg = config(TrainMode::strict, 20);
  cfg.eta_d = 0.02;
  const TrainRun run = train(set_model(), ds, cfg, [&](const StepEvent& e) {
    for (std::size_t i = 0; i < 2; ++i) {
      acc[i] += e.gamma_before[i];
      worst = std::max(worst, std::abs(e.lambda[i] - 0.02 * acc[i]));
    }
    EXPECT_TRUE(e.u.empty() || std::all_of(e.u.begin(), e.u.end(), [](double u) { return u == 0.0; }));
  });
  EXPECT_LE(worst, 1e-10);
  for (const auto& row : run.trace)
    for (double u : row.u) EXPECT_EQ(u, 0.0);
}

TEST(Trainer, PlainModeNeverTouchesGammaOrDuals) {
  const Dataset ds = sets(0.5);
  const TrainRun run = train_plain_equivariant(set_model(), ds, config(TrainMode::plain, 5));
  for (const auto& row : run.trace) {
    for (double g : row.gamma) EXPECT_EQ(g, 0.0);
    for (double l : row.lambda) EXPECT_EQ(l, 0.0);
    for (double u : row.u) EXPECT_EQ(u, 0.0);
    EXPECT_LE(row.eq_error_exact, 1e-10);
  }
}

TEST(Trainer, ZeroEpochsLeavesModelUnchanged) {
  const auto model = set_model();
  const TrainRun run = train(model, sets(0.0), config(TrainMode::strict, 0));
  EXPECT_EQ(run.trace.size(), 1u);
  EXPECT_EQ(run.step, 0u);
  EXPECT_EQ(model_to_json(run.model).dump(), model_to_json(model).dump());
}

TEST(Trainer, DeterministicTraces) {
  const Dataset ds = sets(0.25);
  for (auto mode : {TrainMode::strict, TrainMode::resilient, TrainMode::penalty, TrainMode::plain}) {
    const auto a = train(set_model(), ds, config(mode, 6));
    const auto b = train(set_model(), ds, config(mode, 6));
    EXPECT_EQ(csv(a), csv(b)) << to_string(mode);
  }
}

TEST(Trainer, StrictBestSnapshotIsProjected) {
  const TrainRun run = train(set_model(), sets(0.25), config(TrainMode::strict, 5));
  ASSERT_TRUE(run.best.has_value());
  for (double g : run.best->model.gamma_values()) EXPECT_EQ(g, 0.0);
  const Dataset ds = sets(0.25);
  EXPECT_LE(exact_equivariance_error(run.best->model, ds.inputs[0]), 1e-10);
}

TEST(Trainer, ResilientSpectralNormalizationHolds) {
  const TrainRun run = train(set_model(), sets(0.5), config(TrainMode::resilient, 5));
  for (const auto& layer : run.model.layers())
    for (const auto& m : layer.neq.matrices()) {
      const auto& t = m.tensor();
      const double s = singular_values(t.values(), t.shape()[0], t.shape()[1]).front();
      EXPECT_GE(s, 0.99);
      EXPECT_LE(s, 1.001);
    }
}

TEST(Trainer, PenaltyReducesEquivarianceError) {
  const Dataset ds = sets(0.0);
  auto off = config(TrainMode::penalty, 30);
  off.beta = 0.0;
  auto on = off;
  on.beta = 5.0;
  on.eta_p = 0.002;
  off.eta_p = 0.002;
  const auto a = train_penalty(set_model(), ds, off);
  const auto b = train_penalty(set_model(), ds, on);
  EXPECT_LT(b.trace.back().eq_error_exact, a.trace.back().eq_error_exact);
  for (const auto& row : b.trace)
    for (double l : row.lambda) EXPECT_EQ(l, 0.0);
}

TEST(Trainer, PenaltyVanishesOnEquivariantModel) {
  const Dataset ds = sets(0.0);
  const auto model = project_equivariant(set_model());
  std::mt19937_64 rng(0);
  EXPECT_LE(equivariance_penalty(model, ds.inputs, 3, rng).item(), 1e-20);
}

TEST(Trainer, DivergenceIsReportedWithStep) {
  auto cfg = config(TrainMode::strict, 50);
  cfg.eta_p = 50.0;
  const TrainRun run = train(set_model(), sets(0.5), cfg);
  EXPECT_TRUE(run.diverged);
  EXPECT_GT(run.divergence_step, 0u);
  EXPECT_NE(run.failure.find(std::to_string(run.divergence_step)), std::string::npos);
}

TEST(Trainer, ConfigValidation) {
  TrainConfig c;
  c.eta_p = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.optimizer = "adam";
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_THROW(train(set_model(), c4_toy(C4Target::square, 5, 8, 0), config(TrainMode::strict, 1)),
               std::invalid_argument);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const Dataset ds = sets(0.25);
  auto cfg = config(TrainMode::resilient, 3);
  cfg.optimizer = "momentum";
  const TrainRun run = train(set_model(), ds, cfg);
  const auto path = std::filesystem::temp_directory_path() / "ace_ckpt_roundtrip.bin";
  save_checkpoint(run, path, Json{{"note", "x"}});
  const auto back = load_checkpoint(path);
  EXPECT_EQ(run_to_json(back.run).dump(), run_to_json(run).dump());
  EXPECT_EQ(back.experiment["note"], "x");
  std::filesystem::remove(path);
}

TEST(Checkpoint, ResumeReproducesUninterruptedRun) {
  const Dataset ds = sets(0.5);
  for (auto mode : {TrainMode::strict, TrainMode::resilient}) {
    auto cfg = config(mode, 8);
    cfg.optimizer = "momentum";
    const TrainRun full = train(set_model(), ds, cfg);
    cfg.epochs = 4;
    TrainRun half = train(set_model(), ds, cfg);
    const auto path = std::filesystem::temp_directory_path() / "ace_ckpt_resume.bin";
    save_checkpoint(half, path);
    TrainRun resumed = load_checkpoint(path).run;
    resumed.config.epochs = 8;
    train_until(resumed, ds, 8);
    EXPECT_EQ(csv(resumed), csv(full)) << to_string(mode);
    EXPECT_EQ(model_to_json(resumed.model).dump(), model_to_json(full.model).dump());
    std::filesystem::remove(path);
  }
}

TEST(Checkpoint, StructuredErrors) {
  const TrainRun run = train(set_model(), sets(0.0), config(TrainMode::strict, 1));
  const auto path = std::filesystem::temp_directory_path() / "ace_ckpt_errors.bin";
  save_checkpoint(run, path);
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  auto write = [&](const std::string& b) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << b;
  };
  auto expect_error = [&](const std::string& needle) {
    try {
      load_checkpoint(path);
      FAIL() << "expected " << needle;
    } catch (const CheckpointError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  std::string wrong_version = bytes;
  wrong_version[8] = 7;
  write(wrong_version);
  expect_error("version 7");

  std::string corrupt = bytes;
  corrupt[40] ^= 0x55;
  write(corrupt);
  expect_error("checksum");

  write(bytes.substr(0, bytes.size() - 10));
  expect_error("length");

  write("not a checkpoint at all, definitely not");
  expect_error("not an ACE checkpoint");
  std::filesystem::remove(path);
}
