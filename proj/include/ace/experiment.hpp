#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ace/layers.hpp"
#include "ace/serialization.hpp"
#include "ace/tasks.hpp"
#include "ace/trainer.hpp"

namespace ace {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Flat experiment description. Every key is optional; see README for the schema.
struct ExperimentConfig {
  // task
  std::string task = "c4_toy";  ///< c4_toy | set_regression | scalar_toy
  std::string target = "square";
  std::size_t n_samples = 50;
  std::size_t image_size = 8;
  std::size_t n_points = 4;
  std::size_t dim = 2;
  double epsilon = 0.0;
  double noise = 0.0;
  std::string toy_kind = "strict";  ///< strict | resilient
  double a = 1.0;
  std::optional<std::uint64_t> data_seed;  ///< defaults to seed

  // model
  std::size_t layers = 2;
  std::size_t hidden_channels = 4;
  std::size_t kernel_size = 3;
  std::size_t hidden_dim = 8;
  std::string neq = "dense";
  std::size_t neq_hidden = 16;
  double init_scale = 1.0;
  double neq_init_scale = 1.0;

  TrainConfig train;
  std::string output_dir = "out";

  // verify-bounds
  std::size_t n_models = 100;
  std::string family = "mixed";  ///< mixed | c4 | deepsets
  std::size_t max_layers = 4;
  double gamma_scale = 1.0;

  void validate() const;
};

/// Keys accepted in a config file or by --set.
std::vector<std::string> experiment_keys();

Json experiment_to_json(const ExperimentConfig& config);
/// Rejects unknown keys and wrongly typed values with a ConfigError naming the key.
ExperimentConfig experiment_from_json(const Json& json);

/// "key=value" with value parsed as JSON when possible, else as a string.
void apply_override(Json& json, const std::string& assignment);

/// File, then ACE_SEED (when `env_seed` is set), then the --set overrides.
ExperimentConfig load_experiment(const std::filesystem::path& path, const std::vector<std::string>& overrides,
                                 const std::optional<std::string>& env_seed);

Dataset make_dataset(const ExperimentConfig& config);
HomotopicModel make_model(const ExperimentConfig& config);

struct TrainOutcome {
  TrainRun run;
  Json summary;
  int exit_code = 0;
};

/// Trains, then writes trace.csv, summary.json, checkpoint.bin and the four plots to output_dir.
TrainOutcome run_training(const ExperimentConfig& config, std::ostream& log);
/// Continues a checkpointed run through `config.train.epochs`, writing the same artifacts.
TrainOutcome resume_training(const std::filesystem::path& checkpoint, const std::vector<std::string>& overrides,
                             std::ostream& log);

Json run_summary(const TrainRun& run, const Dataset& dataset, const ExperimentConfig& config);

/// One random model and input for the bound-soundness sweep.
struct BoundSample {
  std::size_t id = 0;
  std::uint64_t seed = 0;
  std::string family;
  std::size_t layers = 0;
  double approx_measured = 0.0, delta_recursion = 0.0, thm1_refined = 0.0, thm1_coarse = 0.0;
  double equiv_measured = 0.0, epsilon_recursion = 0.0, thm2_refined = 0.0, thm2_coarse = 0.0;
  /// First broken link of measured <= recursion <= refined <= coarse, or empty.
  std::string violation;
};

/// a <= b up to floating-point noise: a <= b (1 + 1e-9) + 1e-12.
bool ordered(double a, double b);

BoundSample sample_bounds(std::size_t id, std::uint64_t seed, const std::string& family, std::size_t max_layers,
                          double gamma_scale);

int cmd_train(const ExperimentConfig& config, std::ostream& log);
int cmd_verify_bounds(const ExperimentConfig& config, std::ostream& log);
int cmd_gradcheck(std::uint64_t seed, std::size_t image, std::size_t channels, bool corrupt_fixture, std::ostream& log);
int cmd_sweep(const ExperimentConfig& config, const std::string& param, const std::vector<double>& values,
              std::ostream& log);
int cmd_plot(const std::filesystem::path& trace_csv, const std::filesystem::path& out_dir, std::ostream& log);

}  // namespace ace
