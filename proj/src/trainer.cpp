#include "ace/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "ace/metrics.hpp"

namespace ace {
namespace {

constexpr double kDivergenceThreshold = 1e12;
constexpr int kInitialSpectralIters = 20;

Tensor sample_loss(const Tensor& prediction, const Tensor& target, LossKind kind) {
  Tensor sq = square(prediction - target);
  return kind == LossKind::sse ? sum(sq) : mean(sq);
}

const std::vector<std::size_t>& eval_indices(const Dataset& ds) {
  return ds.splits.val.empty() ? ds.splits.train : ds.splits.val;
}

std::vector<Tensor> trainable_parameters(const HomotopicModel& model, const TrainConfig& config) {
  std::vector<Tensor> params;
  const bool theta = !config.freeze_theta;
  auto append = [&](std::vector<Tensor> more) { params.insert(params.end(), more.begin(), more.end()); };
  switch (config.mode) {
    case TrainMode::strict:
    case TrainMode::resilient:
      if (theta) {
        append(model.equivariant_parameters());
        append(model.non_equivariant_parameters());
      }
      append(model.gammas());
      break;
    case TrainMode::penalty:
      if (theta) {
        append(model.equivariant_parameters());
        append(model.non_equivariant_parameters());
      }
      break;
    case TrainMode::plain:
      if (theta) append(model.equivariant_parameters());
      break;
  }
  return params;
}

void set_gamma_tracking(HomotopicModel& model, bool tracked) {
  for (auto& layer : model.layers()) layer.gamma.tensor().set_requires_grad(tracked);
}

void normalize_branches(HomotopicModel& model, int iters) {
  for (auto& layer : model.layers()) layer.neq.spectral_normalize(iters);
}

std::unique_ptr<PrimalOptimizer> make_optimizer(const TrainConfig& config) {
  if (config.optimizer == "sgd") return std::make_unique<GradientDescent>(config.eta_p);
  if (config.optimizer == "momentum") return std::make_unique<Momentum>(config.eta_p, config.momentum);
  throw std::invalid_argument("train config: unknown optimizer '" + config.optimizer + "' (sgd, momentum)");
}

double selection_score(const TrainConfig& config, const TraceRow& row) {
  return config.mode == TrainMode::strict ? row.loss_val_proj : row.loss_val_raw;
}

TraceRow evaluate(const TrainRun& run, const Dataset& ds) {
  NoGradGuard no_grad;
  const HomotopicModel& model = run.model;
  TraceRow row;
  row.step = run.step;
  row.epoch = run.epoch;
  row.loss_train = dataset_loss(model, ds, ds.splits.train, run.config.loss);
  const auto& val = eval_indices(ds);
  row.loss_val_raw = dataset_loss(model, ds, val, run.config.loss);
  row.loss_val_proj = dataset_loss(project_equivariant(model), ds, val, run.config.loss);
  row.gamma = model.gamma_values();
  row.lambda = run.dual.lambda;
  row.u = run.dual.mode == ConstraintMode::resilient ? run.dual.u : std::vector<double>(model.depth(), 0.0);

  const Group group = group_for(model.input_rep());
  EquivarianceOptions options;
  if (!group.enumerable()) {
    options.mode = EquivarianceOptions::Mode::monte_carlo;
    options.seed = run.config.seed + run.step;
  }
  double x_norm = 0.0;
  const std::size_t n_eq = std::min(run.config.eq_eval_samples, val.size());
  for (std::size_t k = 0; k < n_eq; ++k) {
    const Tensor& x = ds.inputs[val[k]];
    const auto report = equivariance_error(model, x, group, options);
    row.eq_error_exact = std::max(row.eq_error_exact, group.enumerable() ? report.exact_error : report.mc_error);
    x_norm = std::max(x_norm, norm2(x.values()));
  }
  const ModelConstants constants = certify(model);
  row.thm1_refined = thm1_bounds(model, x_norm, constants).refined.value;
  row.thm2_refined = thm2_bounds(model, x_norm, constants).refined.value;
  return row;
}

// Rows off the eval_every grid (a final epoch that is not a multiple) are logged
// but never selected, so that a resumed run drops them without changing `best`.
void record(TrainRun& run, const Dataset& ds, bool candidate = true) {
  TraceRow row = evaluate(run, ds);
  const double score = selection_score(run.config, row);
  if (candidate && std::isfinite(score) && (!run.best || score < run.best->score)) {
    run.best = Snapshot{run.config.mode == TrainMode::strict ? project_equivariant(run.model) : run.model, score,
                        run.step, run.epoch};
  }
  run.trace.push_back(std::move(row));
}

std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

std::mt19937_64 rng_from_string(const std::string& state) {
  std::mt19937_64 rng;
  std::istringstream is(state);
  is >> rng;
  if (!is) throw std::runtime_error("trainer: corrupt random-generator state");
  return rng;
}

}  // namespace

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::strict: return "strict";
    case TrainMode::resilient: return "resilient";
    case TrainMode::penalty: return "penalty";
    case TrainMode::plain: return "plain";
  }
  return "?";
}

TrainMode train_mode_from_string(const std::string& name) {
  if (name == "strict") return TrainMode::strict;
  if (name == "resilient") return TrainMode::resilient;
  if (name == "penalty") return TrainMode::penalty;
  if (name == "plain") return TrainMode::plain;
  throw std::invalid_argument("unknown mode '" + name + "' (strict, resilient, penalty, plain)");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& why) { throw std::invalid_argument("train config: " + why); };
  if (!(eta_p > 0.0) || !std::isfinite(eta_p)) fail("eta_p must be positive");
  if (!(dual_rate() >= 0.0) || !std::isfinite(dual_rate())) fail("eta_d must be non-negative");
  if (!std::isfinite(gamma_init)) fail("gamma_init must be finite");
  if (!(rho > 0.0)) fail("rho must be positive");
  if (!(alpha >= 0.0) || !(beta >= 0.0)) fail("alpha and beta must be non-negative");
  if (mode == TrainMode::penalty && n_g_samples == 0) fail("n_g_samples must be at least 1");
  if (batch_size == 0) fail("batch_size must be at least 1");
  if (eval_every == 0) fail("eval_every must be at least 1");
  if (sn_iters < 1) fail("sn_iters must be at least 1");
  if (optimizer != "sgd" && optimizer != "momentum") fail("optimizer must be sgd or momentum");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must lie in [0, 1)");
}

Json train_config_to_json(const TrainConfig& c) {
  Json j{{"mode", to_string(c.mode)},
         {"eta_p", c.eta_p},
         {"gamma_init", c.gamma_init},
         {"rho", c.rho},
         {"slack_rule", c.slack_rule == SlackRule::descent ? "descent" : "printed_ascent"},
         {"alpha", c.alpha},
         {"beta", c.beta},
         {"n_g_samples", c.n_g_samples},
         {"epochs", c.epochs},
         {"batch_size", c.batch_size},
         {"seed", c.seed},
         {"eval_every", c.eval_every},
         {"eq_eval_samples", c.eq_eval_samples},
         {"loss", c.loss == LossKind::sse ? "sse" : "mse"},
         {"optimizer", c.optimizer},
         {"momentum", c.momentum},
         {"sn_iters", c.sn_iters},
         {"freeze_theta", c.freeze_theta}};
  j["eta_d"] = c.eta_d ? Json(*c.eta_d) : Json(nullptr);
  j["spectral_norm"] = c.spectral_norm ? Json(*c.spectral_norm) : Json(nullptr);
  return j;
}

TrainConfig train_config_from_json(const Json& j) {
  TrainConfig c;
  c.mode = train_mode_from_string(j.at("mode").get<std::string>());
  c.eta_p = j.at("eta_p").get<double>();
  if (!j.at("eta_d").is_null()) c.eta_d = j.at("eta_d").get<double>();
  c.gamma_init = j.at("gamma_init").get<double>();
  c.rho = j.at("rho").get<double>();
  c.slack_rule = j.at("slack_rule").get<std::string>() == "descent" ? SlackRule::descent : SlackRule::printed_ascent;
  c.alpha = j.at("alpha").get<double>();
  c.beta = j.at("beta").get<double>();
  c.n_g_samples = j.at("n_g_samples").get<std::size_t>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.eval_every = j.at("eval_every").get<std::size_t>();
  c.eq_eval_samples = j.at("eq_eval_samples").get<std::size_t>();
  c.loss = j.at("loss").get<std::string>() == "sse" ? LossKind::sse : LossKind::mse;
  c.optimizer = j.at("optimizer").get<std::string>();
  c.momentum = j.at("momentum").get<double>();
  if (!j.at("spectral_norm").is_null()) c.spectral_norm = j.at("spectral_norm").get<bool>();
  c.sn_iters = j.at("sn_iters").get<int>();
  c.freeze_theta = j.at("freeze_theta").get<bool>();
  return c;
}

double dataset_loss(const HomotopicModel& model, const Dataset& dataset, const std::vector<std::size_t>& indices,
                    LossKind loss) {
  if (indices.empty()) return 0.0;
  NoGradGuard no_grad;
  double total = 0.0;
  for (auto i : indices) total += sample_loss(model.forward(dataset.inputs.at(i)), dataset.targets.at(i), loss).item();
  return total / static_cast<double>(indices.size());
}

Tensor equivariance_penalty(const HomotopicModel& model, const std::vector<Tensor>& inputs, std::size_t n_g_samples,
                            std::mt19937_64& rng) {
  if (inputs.empty() || n_g_samples == 0) return Tensor::scalar(0.0);
  const Group group = group_for(model.input_rep());
  const Representation out_rep = model.output_rep();
  Tensor total;
  for (const auto& x : inputs) {
    Tensor fx = model.forward(x);
    for (std::size_t s = 0; s < n_g_samples; ++s) {
      const GroupElement g = group.sample(rng);
      Tensor term = sum(square(model.forward(apply(g, model.input_rep(), x)) - apply(g, out_rep, fx)));
      total = total.defined() ? total + term : term;
    }
  }
  return scale(total, 1.0 / static_cast<double>(inputs.size() * n_g_samples));
}

TrainRun start_run(HomotopicModel model, const Dataset& dataset, const TrainConfig& config) {
  config.validate();
  if (!(dataset.input_rep == model.input_rep()))
    throw ShapeError("trainer: dataset inputs " + dataset.input_rep.to_string() + " do not match model input " +
                     model.input_rep().to_string());
  if (dataset.target_rep.shape != model.output_rep().shape)
    throw ShapeError("trainer: dataset targets " + dataset.target_rep.to_string() + " do not match model output " +
                     model.output_rep().to_string());
  if (dataset.splits.train.empty()) throw std::invalid_argument("trainer: empty training split");

  TrainRun run;
  run.config = config;
  switch (config.mode) {
    case TrainMode::strict:
    case TrainMode::resilient: model.set_gammas(config.gamma_init); break;
    case TrainMode::penalty: model.set_gammas(1.0); break;
    case TrainMode::plain: model.set_gammas(0.0); break;
  }
  run.model = std::move(model);
  run.dual = config.mode == TrainMode::resilient ? DualState::resilient(run.model.depth(), config.rho)
                                                 : DualState::strict(run.model.depth());
  if (config.spectral_norm_enabled()) normalize_branches(run.model, kInitialSpectralIters);
  run.rng_state = rng_to_string(std::mt19937_64(config.seed));
  record(run, dataset);
  return run;
}

void train_until(TrainRun& run, const Dataset& dataset, std::size_t final_epoch, const StepObserver& observer) {
  const TrainConfig& config = run.config;
  config.validate();
  if (run.diverged) return;
  final_epoch = std::min(final_epoch, config.epochs);
  if (run.epoch < final_epoch && !run.trace.empty() && run.trace.back().epoch == run.epoch &&
      run.epoch % config.eval_every != 0)
    run.trace.pop_back();

  const bool dual_mode = config.mode == TrainMode::strict || config.mode == TrainMode::resilient;
  set_gamma_tracking(run.model, dual_mode);
  std::vector<Tensor> params = trainable_parameters(run.model, config);
  std::vector<Tensor> all_params = run.model.equivariant_parameters();
  for (auto& t : run.model.non_equivariant_parameters()) all_params.push_back(t);
  for (auto& t : run.model.gammas()) all_params.push_back(t);

  auto optimizer = make_optimizer(config);
  optimizer->restore(run.optimizer_state);
  std::mt19937_64 rng = rng_from_string(run.rng_state);
  const double eta_d = config.dual_rate();

  while (run.epoch < final_epoch) {
    std::vector<std::size_t> order = dataset.splits.train;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      for (auto& p : all_params) p.zero_grad();

      Tensor j0;
      std::vector<Tensor> batch_inputs;
      for (std::size_t k = start; k < end; ++k) {
        const auto i = order[k];
        Tensor term = sample_loss(run.model.forward(dataset.inputs[i]), dataset.targets[i], config.loss);
        j0 = j0.defined() ? j0 + term : term;
        batch_inputs.push_back(dataset.inputs[i]);
      }
      j0 = scale(j0, 1.0 / static_cast<double>(end - start));
      const double j0_value = j0.item();
      if (!std::isfinite(j0_value) || std::abs(j0_value) > kDivergenceThreshold) {
        run.diverged = true;
        run.divergence_step = run.step + 1;
        run.failure = "diverged at step " + std::to_string(run.divergence_step) + " (J0 = " +
                      format_decimal(j0_value) + ")";
        run.rng_state = rng_to_string(rng);
        run.optimizer_state = optimizer->state();
        return;
      }

      Tensor objective;
      switch (config.mode) {
        case TrainMode::strict: {
          auto g = run.model.gammas();
          objective = lagrangian_strict(j0, stack(g), run.dual);
          break;
        }
        case TrainMode::resilient: {
          auto g = run.model.gammas();
          objective = lagrangian_resilient(j0, stack(g), run.dual);
          break;
        }
        case TrainMode::penalty:
          objective = config.alpha * j0;
          if (config.beta > 0.0)
            objective = objective + config.beta * equivariance_penalty(run.model, batch_inputs, config.n_g_samples, rng);
          break;
        case TrainMode::plain: objective = j0; break;
      }

      const std::vector<double> gamma_before = run.model.gamma_values();
      if (!params.empty() && objective.requires_grad()) {
        objective.backward();
        optimizer->step(params);
      }
      if (config.mode == TrainMode::strict) dual_step_strict(run.dual, gamma_before, eta_d);
      if (config.mode == TrainMode::resilient)
        dual_step_resilient(run.dual, gamma_before, config.eta_p, eta_d, config.slack_rule);
      if (config.spectral_norm_enabled() && !config.freeze_theta) normalize_branches(run.model, config.sn_iters);
      ++run.step;

      if (observer) {
        StepEvent ev;
        ev.step = run.step;
        ev.loss = j0_value;
        ev.gamma_before = gamma_before;
        ev.gamma_after = run.model.gamma_values();
        ev.lambda = run.dual.lambda;
        ev.u = run.dual.u;
        observer(ev);
      }
    }
    ++run.epoch;
    if (run.epoch % config.eval_every == 0)
      record(run, dataset);
    else if (run.epoch == config.epochs)
      record(run, dataset, false);
  }
  run.rng_state = rng_to_string(rng);
  run.optimizer_state = optimizer->state();
}

TrainRun train(HomotopicModel model, const Dataset& dataset, const TrainConfig& config, const StepObserver& observer) {
  TrainRun run = start_run(std::move(model), dataset, config);
  train_until(run, dataset, config.epochs, observer);
  return run;
}

TrainRun train_strict(HomotopicModel model, const Dataset& dataset, TrainConfig config, const StepObserver& observer) {
  config.mode = TrainMode::strict;
  return train(std::move(model), dataset, config, observer);
}

TrainRun train_resilient(HomotopicModel model, const Dataset& dataset, TrainConfig config,
                         const StepObserver& observer) {
  config.mode = TrainMode::resilient;
  return train(std::move(model), dataset, config, observer);
}

TrainRun train_penalty(HomotopicModel model, const Dataset& dataset, TrainConfig config, const StepObserver& observer) {
  config.mode = TrainMode::penalty;
  return train(std::move(model), dataset, config, observer);
}

TrainRun train_plain_equivariant(HomotopicModel model, const Dataset& dataset, TrainConfig config,
                                 const StepObserver& observer) {
  config.mode = TrainMode::plain;
  return train(std::move(model), dataset, config, observer);
}

std::vector<std::string> trace_header(std::size_t layers) {
  std::vector<std::string> h{"step", "loss_train", "loss_val_raw", "loss_val_proj", "eq_error_exact"};
  for (const char* prefix : {"gamma_", "lambda_", "u_"})
    for (std::size_t i = 1; i <= layers; ++i) h.push_back(prefix + std::to_string(i));
  h.push_back("thm1_refined");
  h.push_back("thm2_refined");
  return h;
}

void write_trace_csv(const std::vector<TraceRow>& trace, std::size_t layers, std::ostream& out) {
  const auto header = trace_header(layers);
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const auto& row : trace) {
    if (row.gamma.size() != layers || row.lambda.size() != layers || row.u.size() != layers)
      throw std::logic_error("write_trace_csv: row at step " + std::to_string(row.step) + " has the wrong width");
    out << row.step << ',' << format_decimal(row.loss_train) << ',' << format_decimal(row.loss_val_raw) << ','
        << format_decimal(row.loss_val_proj) << ',' << format_decimal(row.eq_error_exact);
    for (const auto* v : {&row.gamma, &row.lambda, &row.u})
      for (double x : *v) out << ',' << format_decimal(x);
    out << ',' << format_decimal(row.thm1_refined) << ',' << format_decimal(row.thm2_refined) << '\n';
  }
}

void write_trace_csv(const std::vector<TraceRow>& trace, std::size_t layers, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("write_trace_csv: cannot write " + path.string());
  write_trace_csv(trace, layers, out);
}

}  // namespace ace
