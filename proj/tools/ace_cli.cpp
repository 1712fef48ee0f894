// ace: train, verify bounds, gradcheck, sweep and plot.
#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "ace/checkpoint.hpp"
#include "ace/experiment.hpp"

namespace {

std::optional<std::string> env_seed() {
  if (const char* s = std::getenv("ACE_SEED")) return std::string(s);
  return std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive constrained equivariance: training and bound checks"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("--config,-c", config_path, "JSON config file")->check(CLI::ExistingFile);
    cmd->add_option("--set", overrides, "Override a config key (key=value), repeatable")->take_all();
  };

  auto* train = app.add_subcommand("train", "Train a homotopic model");
  add_config(train);
  std::string resume;
  train->add_option("--resume", resume, "Continue from checkpoint.bin")->check(CLI::ExistingFile);

  auto* verify = app.add_subcommand("verify-bounds", "Check measured <= recursion <= refined <= coarse on random models");
  add_config(verify);

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
  std::uint64_t gc_seed = 0;
  std::size_t gc_image = 5, gc_channels = 2;
  bool corrupt = false;
  gradcheck->add_option("--seed", gc_seed, "RNG seed");
  gradcheck->add_option("--image-size", gc_image, "Image side for conv cases")->check(CLI::Range(4, 64));
  gradcheck->add_option("--channels", gc_channels, "Channels for conv cases")->check(CLI::Range(1, 16));
  gradcheck->add_flag("--corrupt-fixture", corrupt, "Include an op with a deliberately wrong backward");

  auto* sweep = app.add_subcommand("sweep", "Train once per value of one parameter");
  add_config(sweep);
  std::string param;
  std::vector<double> values;
  sweep->add_option("--param", param, "eta_d, gamma_init, epsilon or rho")->required();
  sweep->add_option("--values", values, "Values to try")->required()->delimiter(',');

  auto* plot = app.add_subcommand("plot", "Render gamma, lambda, u and equivariance-error plots from trace.csv");
  std::string trace_path, plot_out;
  plot->add_option("trace", trace_path, "trace.csv")->required()->check(CLI::ExistingFile);
  plot->add_option("--out,-o", plot_out, "Output directory (default: next to trace.csv)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gradcheck) return ace::cmd_gradcheck(gc_seed, gc_image, gc_channels, corrupt, std::cout);
    if (*plot) {
      const std::filesystem::path trace(trace_path);
      return ace::cmd_plot(trace, plot_out.empty() ? trace.parent_path() : std::filesystem::path(plot_out), std::cout);
    }
    if (*train && !resume.empty()) {
      if (!config_path.empty()) throw ace::ConfigError("--resume takes its config from the checkpoint; use --set");
      return ace::resume_training(resume, overrides, std::cout).exit_code;
    }
    const auto config = ace::load_experiment(config_path, overrides, env_seed());
    if (*train) return ace::cmd_train(config, std::cout);
    if (*verify) return ace::cmd_verify_bounds(config, std::cout);
    if (*sweep) return ace::cmd_sweep(config, param, values, std::cout);
  } catch (const ace::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ace::CheckpointError& e) {
    std::cerr << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
