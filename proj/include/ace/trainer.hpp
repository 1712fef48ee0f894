#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "ace/constraints.hpp"
#include "ace/layers.hpp"
#include "ace/serialization.hpp"
#include "ace/tasks.hpp"

namespace ace {

enum class TrainMode { strict, resilient, penalty, plain };
std::string to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& name);

enum class LossKind {
  sse,  ///< per-sample sum of squared errors, averaged over the batch
  mse,  ///< per-sample mean of squared errors, averaged over the batch
};

struct TrainConfig {
  TrainMode mode = TrainMode::strict;
  double eta_p = 1e-2;
  std::optional<double> eta_d;  ///< defaults to eta_p
  double gamma_init = 1.0;
  double rho = 1.0;
  SlackRule slack_rule = SlackRule::descent;
  // penalty baseline
  double alpha = 1.0;
  double beta = 1.0;
  std::size_t n_g_samples = 1;

  std::size_t epochs = 10;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  std::size_t eval_every = 1;
  std::size_t eq_eval_samples = 4;
  LossKind loss = LossKind::sse;
  std::string optimizer = "sgd";  ///< sgd | momentum
  double momentum = 0.9;
  /// Spectral normalization of every non-equivariant branch after each step.
  /// Unset means on in resilient mode and off elsewhere.
  std::optional<bool> spectral_norm;
  int sn_iters = 1;
  /// Train gamma only; used to run the scalar toys through this loop.
  bool freeze_theta = false;

  double dual_rate() const { return eta_d.value_or(eta_p); }
  bool spectral_norm_enabled() const { return spectral_norm.value_or(mode == TrainMode::resilient); }
  void validate() const;
};

Json train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const Json& json);

struct TraceRow {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double loss_train = 0.0;
  double loss_val_raw = 0.0;
  double loss_val_proj = 0.0;
  double eq_error_exact = 0.0;
  std::vector<double> gamma;
  std::vector<double> lambda;
  std::vector<double> u;
  double thm1_refined = 0.0;
  double thm2_refined = 0.0;
};

struct Snapshot {
  HomotopicModel model;
  double score = 0.0;
  std::size_t step = 0;
  std::size_t epoch = 0;
};

/// Values seen by one primal-dual iteration.
struct StepEvent {
  std::size_t step = 0;  ///< 1-based index of the iteration just completed
  double loss = 0.0;     ///< minibatch objective before the step
  std::vector<double> gamma_before;
  std::vector<double> gamma_after;
  std::vector<double> lambda;  ///< after the dual step
  std::vector<double> u;
};
using StepObserver = std::function<void(const StepEvent&)>;

struct TrainRun {
  TrainConfig config;
  HomotopicModel model;
  DualState dual;
  std::vector<TraceRow> trace;
  std::optional<Snapshot> best;
  std::size_t step = 0;
  std::size_t epoch = 0;
  std::string rng_state;  ///< std::mt19937_64 state in its stream form
  std::vector<std::vector<double>> optimizer_state;
  bool diverged = false;
  std::size_t divergence_step = 0;
  std::string failure;
};

/// Applies the mode's gamma convention (gamma_init, fixed 1, or 0), the initial
/// spectral normalization, and records the step-0 row.
TrainRun start_run(HomotopicModel model, const Dataset& dataset, const TrainConfig& config);

/// Continues `run` through epoch `final_epoch` (capped at config.epochs). Rows are
/// recorded after epochs divisible by eval_every and after the last configured epoch,
/// so interrupting and resuming reproduces the uninterrupted trace.
void train_until(TrainRun& run, const Dataset& dataset, std::size_t final_epoch, const StepObserver& observer = {});

TrainRun train(HomotopicModel model, const Dataset& dataset, const TrainConfig& config,
               const StepObserver& observer = {});
TrainRun train_strict(HomotopicModel model, const Dataset& dataset, TrainConfig config,
                      const StepObserver& observer = {});
TrainRun train_resilient(HomotopicModel model, const Dataset& dataset, TrainConfig config,
                         const StepObserver& observer = {});
TrainRun train_penalty(HomotopicModel model, const Dataset& dataset, TrainConfig config,
                       const StepObserver& observer = {});
TrainRun train_plain_equivariant(HomotopicModel model, const Dataset& dataset, TrainConfig config,
                                 const StepObserver& observer = {});

/// Mean loss of `model` over the given samples (no tape).
double dataset_loss(const HomotopicModel& model, const Dataset& dataset, const std::vector<std::size_t>& indices,
                    LossKind loss = LossKind::sse);

/// Equivariance penalty: mean over samples and sampled g of ||f(rho g x) - rho g f(x)||^2.
Tensor equivariance_penalty(const HomotopicModel& model, const std::vector<Tensor>& inputs,
                            std::size_t n_g_samples, std::mt19937_64& rng);

std::vector<std::string> trace_header(std::size_t layers);
void write_trace_csv(const std::vector<TraceRow>& trace, std::size_t layers, std::ostream& out);
void write_trace_csv(const std::vector<TraceRow>& trace, std::size_t layers, const std::filesystem::path& path);

}  // namespace ace
