#include "ace/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>

#include "ace/checkpoint.hpp"
#include "ace/gradcheck.hpp"
#include "ace/metrics.hpp"
#include "ace/svg_plot.hpp"

namespace ace {
namespace {

struct Key {
  std::string name;
  std::function<void(const Json&, ExperimentConfig&)> set;
  std::function<Json(const ExperimentConfig&)> get;
};

[[noreturn]] void type_error(const std::string& key, const char* expected, const Json& value) {
  throw ConfigError("config key '" + key + "': expected " + expected + ", got " + value.dump());
}

std::size_t as_size(const std::string& key, const Json& v) {
  if (v.is_number_unsigned()) return v.get<std::size_t>();
  if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::size_t>(v.get<long long>());
  type_error(key, "a non-negative integer", v);
}
double as_double(const std::string& key, const Json& v) {
  if (!v.is_number()) type_error(key, "a number", v);
  return v.get<double>();
}
std::string as_string(const std::string& key, const Json& v) {
  if (!v.is_string()) type_error(key, "a string", v);
  return v.get<std::string>();
}
bool as_bool(const std::string& key, const Json& v) {
  if (!v.is_boolean()) type_error(key, "true or false", v);
  return v.get<bool>();
}

template <class T>
Key size_key(const std::string& name, T ExperimentConfig::*member) {
  return {name, [name, member](const Json& v, ExperimentConfig& c) { c.*member = as_size(name, v); },
          [member](const ExperimentConfig& c) { return Json(c.*member); }};
}
Key double_key(const std::string& name, double ExperimentConfig::*member) {
  return {name, [name, member](const Json& v, ExperimentConfig& c) { c.*member = as_double(name, v); },
          [member](const ExperimentConfig& c) { return Json(c.*member); }};
}
Key string_key(const std::string& name, std::string ExperimentConfig::*member) {
  return {name, [name, member](const Json& v, ExperimentConfig& c) { c.*member = as_string(name, v); },
          [member](const ExperimentConfig& c) { return Json(c.*member); }};
}
template <class T>
Key train_size_key(const std::string& name, T TrainConfig::*member) {
  return {name, [name, member](const Json& v, ExperimentConfig& c) { c.train.*member = static_cast<T>(as_size(name, v)); },
          [member](const ExperimentConfig& c) { return Json(c.train.*member); }};
}
Key train_double_key(const std::string& name, double TrainConfig::*member) {
  return {name, [name, member](const Json& v, ExperimentConfig& c) { c.train.*member = as_double(name, v); },
          [member](const ExperimentConfig& c) { return Json(c.train.*member); }};
}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = [] {
    std::vector<Key> k;
    k.push_back(string_key("task", &ExperimentConfig::task));
    k.push_back(string_key("target", &ExperimentConfig::target));
    k.push_back(size_key("n_samples", &ExperimentConfig::n_samples));
    k.push_back(size_key("image_size", &ExperimentConfig::image_size));
    k.push_back(size_key("n_points", &ExperimentConfig::n_points));
    k.push_back(size_key("dim", &ExperimentConfig::dim));
    k.push_back(double_key("epsilon", &ExperimentConfig::epsilon));
    k.push_back(double_key("noise", &ExperimentConfig::noise));
    k.push_back(string_key("toy_kind", &ExperimentConfig::toy_kind));
    k.push_back(double_key("a", &ExperimentConfig::a));
    k.push_back({"data_seed",
                 [](const Json& v, ExperimentConfig& c) {
                   if (v.is_null()) c.data_seed.reset();
                   else c.data_seed = as_size("data_seed", v);
                 },
                 [](const ExperimentConfig& c) { return c.data_seed ? Json(*c.data_seed) : Json(nullptr); }});
    k.push_back(size_key("layers", &ExperimentConfig::layers));
    k.push_back(size_key("hidden_channels", &ExperimentConfig::hidden_channels));
    k.push_back(size_key("kernel_size", &ExperimentConfig::kernel_size));
    k.push_back(size_key("hidden_dim", &ExperimentConfig::hidden_dim));
    k.push_back(string_key("neq", &ExperimentConfig::neq));
    k.push_back(size_key("neq_hidden", &ExperimentConfig::neq_hidden));
    k.push_back(double_key("init_scale", &ExperimentConfig::init_scale));
    k.push_back(double_key("neq_init_scale", &ExperimentConfig::neq_init_scale));

    k.push_back({"mode", [](const Json& v, ExperimentConfig& c) {
                   c.train.mode = train_mode_from_string(as_string("mode", v));
                 },
                 [](const ExperimentConfig& c) { return Json(to_string(c.train.mode)); }});
    k.push_back(train_double_key("eta_p", &TrainConfig::eta_p));
    k.push_back({"eta_d",
                 [](const Json& v, ExperimentConfig& c) {
                   if (v.is_null()) c.train.eta_d.reset();
                   else c.train.eta_d = as_double("eta_d", v);
                 },
                 [](const ExperimentConfig& c) { return c.train.eta_d ? Json(*c.train.eta_d) : Json(nullptr); }});
    k.push_back(train_double_key("gamma_init", &TrainConfig::gamma_init));
    k.push_back(train_double_key("rho", &TrainConfig::rho));
    k.push_back({"slack_rule",
                 [](const Json& v, ExperimentConfig& c) {
                   const auto s = as_string("slack_rule", v);
                   if (s == "descent") c.train.slack_rule = SlackRule::descent;
                   else if (s == "printed_ascent") c.train.slack_rule = SlackRule::printed_ascent;
                   else throw ConfigError("config key 'slack_rule': expected descent or printed_ascent, got " + s);
                 },
                 [](const ExperimentConfig& c) {
                   return Json(c.train.slack_rule == SlackRule::descent ? "descent" : "printed_ascent");
                 }});
    k.push_back(train_double_key("alpha", &TrainConfig::alpha));
    k.push_back(train_double_key("beta", &TrainConfig::beta));
    k.push_back(train_size_key("n_g_samples", &TrainConfig::n_g_samples));
    k.push_back(train_size_key("epochs", &TrainConfig::epochs));
    k.push_back(train_size_key("batch_size", &TrainConfig::batch_size));
    k.push_back(train_size_key("seed", &TrainConfig::seed));
    k.push_back(train_size_key("eval_every", &TrainConfig::eval_every));
    k.push_back(train_size_key("eq_eval_samples", &TrainConfig::eq_eval_samples));
    k.push_back({"loss",
                 [](const Json& v, ExperimentConfig& c) {
                   const auto s = as_string("loss", v);
                   if (s == "sse") c.train.loss = LossKind::sse;
                   else if (s == "mse") c.train.loss = LossKind::mse;
                   else throw ConfigError("config key 'loss': expected sse or mse, got " + s);
                 },
                 [](const ExperimentConfig& c) { return Json(c.train.loss == LossKind::sse ? "sse" : "mse"); }});
    k.push_back({"optimizer", [](const Json& v, ExperimentConfig& c) { c.train.optimizer = as_string("optimizer", v); },
                 [](const ExperimentConfig& c) { return Json(c.train.optimizer); }});
    k.push_back(train_double_key("momentum", &TrainConfig::momentum));
    k.push_back({"spectral_norm",
                 [](const Json& v, ExperimentConfig& c) {
                   if (v.is_null()) c.train.spectral_norm.reset();
                   else c.train.spectral_norm = as_bool("spectral_norm", v);
                 },
                 [](const ExperimentConfig& c) {
                   return c.train.spectral_norm ? Json(*c.train.spectral_norm) : Json(nullptr);
                 }});
    k.push_back(train_size_key("sn_iters", &TrainConfig::sn_iters));
    k.push_back({"freeze_theta",
                 [](const Json& v, ExperimentConfig& c) { c.train.freeze_theta = as_bool("freeze_theta", v); },
                 [](const ExperimentConfig& c) { return Json(c.train.freeze_theta); }});
    k.push_back(string_key("output_dir", &ExperimentConfig::output_dir));
    k.push_back(size_key("n_models", &ExperimentConfig::n_models));
    k.push_back(string_key("family", &ExperimentConfig::family));
    k.push_back(size_key("max_layers", &ExperimentConfig::max_layers));
    k.push_back(double_key("gamma_scale", &ExperimentConfig::gamma_scale));
    return k;
  }();
  return table;
}

std::uint64_t data_seed(const ExperimentConfig& c) { return c.data_seed.value_or(c.train.seed); }

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

std::string trace_bytes(const TrainRun& run) {
  std::ostringstream os;
  write_trace_csv(run.trace, run.model.depth(), os);
  return os.str();
}

void write_artifacts(const TrainRun& run, const Json& summary, const ExperimentConfig& config) {
  const std::filesystem::path dir = config.output_dir;
  std::filesystem::create_directories(dir);
  write_text(dir / "trace.csv", trace_bytes(run));
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  save_checkpoint(run, dir / "checkpoint.bin", experiment_to_json(config));
  plot_trace(dir / "trace.csv", dir);
}

int finish(const TrainRun& run, std::ostream& log) {
  if (run.diverged) {
    log << "error: " << run.failure << "\n";
    return 3;
  }
  return 0;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (task != "c4_toy" && task != "set_regression" && task != "scalar_toy")
    throw ConfigError("config key 'task': expected c4_toy, set_regression or scalar_toy, got " + task);
  if (task == "c4_toy") {
    c4_target_from_string(target);
    if (image_size < 8 || image_size % 2) throw ConfigError("config key 'image_size': must be even and >= 8");
  }
  if (task == "set_regression" && n_points < 2) throw ConfigError("config key 'n_points': must be >= 2");
  if (task == "scalar_toy" && toy_kind != "strict" && toy_kind != "resilient")
    throw ConfigError("config key 'toy_kind': expected strict or resilient, got " + toy_kind);
  if (task != "scalar_toy" && n_samples < 3) throw ConfigError("config key 'n_samples': need at least 3 samples");
  if (!(epsilon >= 0.0)) throw ConfigError("config key 'epsilon': must be non-negative");
  if (!(noise >= 0.0)) throw ConfigError("config key 'noise': must be non-negative");
  if (layers == 0) throw ConfigError("config key 'layers': must be at least 1");
  if (kernel_size % 2 == 0) throw ConfigError("config key 'kernel_size': must be odd");
  if (neq != "dense" && neq != "mlp") throw ConfigError("config key 'neq': expected dense or mlp, got " + neq);
  if (family != "mixed" && family != "c4" && family != "deepsets")
    throw ConfigError("config key 'family': expected mixed, c4 or deepsets, got " + family);
  if (max_layers == 0) throw ConfigError("config key 'max_layers': must be at least 1");
  if (output_dir.empty()) throw ConfigError("config key 'output_dir': must not be empty");
  try {
    train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

std::vector<std::string> experiment_keys() {
  std::vector<std::string> out;
  for (const auto& k : keys()) out.push_back(k.name);
  return out;
}

Json experiment_to_json(const ExperimentConfig& config) {
  Json j = Json::object();
  for (const auto& k : keys()) j[k.name] = k.get(config);
  return j;
}

ExperimentConfig experiment_from_json(const Json& json) {
  if (!json.is_object()) throw ConfigError("config: top level must be a JSON object");
  ExperimentConfig c;
  for (const auto& [name, value] : json.items()) {
    const auto it = std::find_if(keys().begin(), keys().end(), [&](const Key& k) { return k.name == name; });
    if (it == keys().end()) {
      std::string valid;
      for (const auto& k : keys()) valid += (valid.empty() ? "" : ", ") + k.name;
      throw ConfigError("config: unknown key '" + name + "' (valid keys: " + valid + ")");
    }
    try {
      it->set(value, c);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError("config key '" + name + "': " + e.what());
    }
  }
  // The scalar toy optimizes gamma alone; its mode follows toy_kind unless given.
  if (c.task == "scalar_toy") {
    if (!json.contains("freeze_theta")) c.train.freeze_theta = true;
    if (!json.contains("mode")) c.train.mode = train_mode_from_string(c.toy_kind);
  }
  c.validate();
  return c;
}

void apply_override(Json& json, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json[key] = value;
}

ExperimentConfig load_experiment(const std::filesystem::path& path, const std::vector<std::string>& overrides,
                                 const std::optional<std::string>& env_seed) {
  Json j = Json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot read " + path.string());
    j = Json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config: " + path.string() + " is not valid JSON");
  }
  if (env_seed) {
    const Json seed = Json::parse(*env_seed, nullptr, false);
    if (seed.is_discarded() || !seed.is_number_integer() || seed.get<long long>() < 0)
      throw ConfigError("ACE_SEED must be a non-negative integer, got '" + *env_seed + "'");
    j["seed"] = seed;
  }
  for (const auto& o : overrides) apply_override(j, o);
  return experiment_from_json(j);
}

Dataset make_dataset(const ExperimentConfig& c) {
  if (c.task == "c4_toy") return c4_toy(c4_target_from_string(c.target), c.n_samples, c.image_size, data_seed(c), c.noise);
  if (c.task == "set_regression") return set_regression(c.n_points, c.dim, c.epsilon, c.n_samples, data_seed(c), c.noise);
  const auto kind = c.toy_kind == "strict" ? ScalarToy::Kind::strict_kkt : ScalarToy::Kind::resilient_kkt;
  return scalar_toy_dataset(scalar_toy(kind, c.a, c.train.rho));
}

HomotopicModel make_model(const ExperimentConfig& c) {
  if (c.task == "scalar_toy") return scalar_toy_model(c.train.gamma_init);
  ModelSpec spec;
  spec.family = c.task == "c4_toy" ? ModelSpec::Family::c4 : ModelSpec::Family::deepsets;
  spec.layers = c.layers;
  spec.image_size = c.image_size;
  spec.in_channels = 1;
  spec.hidden_channels = c.hidden_channels;
  spec.out_channels = 1;
  spec.kernel_size = c.kernel_size;
  spec.n_points = c.n_points;
  spec.in_dim = c.dim;
  spec.hidden_dim = c.hidden_dim;
  spec.out_dim = c.dim;
  spec.neq = non_equivariant_kind_from_string(c.neq);
  spec.neq_hidden = c.neq_hidden;
  spec.init_scale = c.init_scale;
  spec.neq_init_scale = c.neq_init_scale;
  spec.gamma_init = c.train.gamma_init;
  spec.seed = c.train.seed;
  return build_model(spec);
}

Json run_summary(const TrainRun& run, const Dataset& ds, const ExperimentConfig& config) {
  const auto& test = ds.splits.test.empty() ? ds.splits.train : ds.splits.test;
  const HomotopicModel& model = run.model;
  const auto projected = project_equivariant(model);
  Json s = Json::object();
  s["task"] = config.task;
  s["mode"] = to_string(run.config.mode);
  s["epochs"] = run.epoch;
  s["steps"] = run.step;
  s["diverged"] = run.diverged;
  s["failure"] = run.failure;
  const TraceRow& last = run.trace.back();
  s["loss_train"] = last.loss_train;
  s["loss_val_raw"] = last.loss_val_raw;
  s["loss_val_proj"] = last.loss_val_proj;
  s["test_loss_raw"] = dataset_loss(model, ds, test, run.config.loss);
  s["test_loss_proj"] = dataset_loss(projected, ds, test, run.config.loss);
  s["max_abs_gamma"] = max_abs(model.gamma_values());
  s["max_abs_lambda"] = max_abs(run.dual.lambda);
  s["max_u"] = run.dual.u.empty() ? 0.0 : max_abs(run.dual.u);
  s["eq_error_exact"] = last.eq_error_exact;
  s["thm1_refined"] = last.thm1_refined;
  s["thm2_refined"] = last.thm2_refined;

  // Certificates on the first test input.
  const Tensor& x = ds.inputs.at(test.front());
  const double x_norm = norm2(x.values());
  const ModelConstants constants = certify(model);
  const auto t1 = thm1_bounds(model, x_norm, constants);
  const auto t2 = thm2_bounds(model, x_norm, constants);
  const auto rec = recursion_bounds(model, x, constants);
  s["probe_approximation_error"] = approximation_error(model, x);
  s["probe_equivariance_error"] = exact_equivariance_error(model, x);
  s["probe_delta_recursion"] = rec.delta.value;
  s["probe_epsilon_recursion"] = rec.epsilon.value;
  s["probe_thm1_refined"] = t1.refined.value;
  s["probe_thm1_coarse"] = t1.coarse.value;
  s["probe_thm2_refined"] = t2.refined.value;
  s["probe_thm2_coarse"] = t2.coarse.value;
  s["M"] = constants.M();
  s["B"] = constants.B();
  if (run.best) {
    s["best_step"] = run.best->step;
    s["best_score"] = run.best->score;
    s["best_test_loss"] = dataset_loss(run.best->model, ds, test, run.config.loss);
  }
  return s;
}

TrainOutcome run_training(const ExperimentConfig& config, std::ostream& log) {
  config.validate();
  const Dataset ds = make_dataset(config);
  TrainOutcome out;
  out.run = train(make_model(config), ds, config.train);
  out.summary = run_summary(out.run, ds, config);
  write_artifacts(out.run, out.summary, config);
  out.exit_code = finish(out.run, log);
  log << "trained " << out.run.epoch << " epochs (" << out.run.step << " steps), max|gamma| = "
      << format_decimal(out.summary["max_abs_gamma"].get<double>()) << ", artifacts in " << config.output_dir << "\n";
  return out;
}

TrainOutcome resume_training(const std::filesystem::path& checkpoint, const std::vector<std::string>& overrides,
                             std::ostream& log) {
  CheckpointContents saved = load_checkpoint(checkpoint);
  Json j = saved.experiment;
  for (const auto& o : overrides) apply_override(j, o);
  const ExperimentConfig config = experiment_from_json(j);
  const Dataset ds = make_dataset(config);
  TrainOutcome out;
  out.run = std::move(saved.run);
  out.run.config.epochs = config.train.epochs;
  train_until(out.run, ds, config.train.epochs);
  out.summary = run_summary(out.run, ds, config);
  write_artifacts(out.run, out.summary, config);
  out.exit_code = finish(out.run, log);
  log << "resumed to epoch " << out.run.epoch << " (" << out.run.step << " steps), artifacts in "
      << config.output_dir << "\n";
  return out;
}

bool ordered(double a, double b) { return a <= b * (1.0 + 1e-9) + 1e-12; }

BoundSample sample_bounds(std::size_t id, std::uint64_t seed, const std::string& family, std::size_t max_layers,
                          double gamma_scale) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> layer_dist(1, max_layers);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  BoundSample s;
  s.id = id;
  s.seed = seed;
  s.family = family == "mixed" ? (unit(rng) < 0.5 ? "c4" : "deepsets") : family;
  s.layers = layer_dist(rng);

  ModelSpec spec;
  spec.layers = s.layers;
  spec.seed = seed;
  spec.init_scale = 0.5 + 1.5 * unit(rng);
  spec.neq_init_scale = 0.5 + 1.5 * unit(rng);
  spec.neq = unit(rng) < 0.5 ? NonEquivariantKind::dense : NonEquivariantKind::mlp;
  spec.neq_hidden = 8;
  if (s.family == "c4") {
    spec.family = ModelSpec::Family::c4;
    spec.image_size = 4 + (unit(rng) < 0.5 ? 0 : 1);
    spec.in_channels = 1 + (unit(rng) < 0.5 ? 0 : 1);
    spec.hidden_channels = 2;
    spec.out_channels = 1;
    spec.kernel_size = 3;
  } else {
    spec.family = ModelSpec::Family::deepsets;
    spec.n_points = 3 + static_cast<std::size_t>(unit(rng) * 3.0);
    spec.in_dim = 2 + static_cast<std::size_t>(unit(rng) * 2.0);
    spec.hidden_dim = 4;
    spec.out_dim = 2;
  }
  HomotopicModel model = build_model(spec);
  for (auto& layer : model.layers()) layer.gamma.tensor().mutable_values()[0] = gamma_scale * (2.0 * unit(rng) - 1.0);

  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> xv(numel(model.input_rep().shape));
  for (auto& v : xv) v = normal(rng);
  const Tensor x(model.input_rep().shape, std::move(xv));
  const double x_norm = norm2(x.values());

  const ModelConstants constants = certify(model);
  const auto t1 = thm1_bounds(model, x_norm, constants);
  const auto t2 = thm2_bounds(model, x_norm, constants);
  const auto rec = recursion_bounds(model, x, constants);
  s.approx_measured = approximation_error(model, x);
  s.delta_recursion = rec.delta.value;
  s.thm1_refined = t1.refined.value;
  s.thm1_coarse = t1.coarse.value;
  s.equiv_measured = exact_equivariance_error(model, x);
  s.epsilon_recursion = rec.epsilon.value;
  s.thm2_refined = t2.refined.value;
  s.thm2_coarse = t2.coarse.value;

  if (!ordered(s.approx_measured, s.delta_recursion)) s.violation = "approximation > delta_recursion";
  else if (!ordered(s.delta_recursion, s.thm1_refined)) s.violation = "delta_recursion > thm1_refined";
  else if (!ordered(s.thm1_refined, s.thm1_coarse)) s.violation = "thm1_refined > thm1_coarse";
  else if (!ordered(s.equiv_measured, s.epsilon_recursion)) s.violation = "equivariance > epsilon_recursion";
  else if (!ordered(s.epsilon_recursion, s.thm2_refined)) s.violation = "epsilon_recursion > thm2_refined";
  else if (!ordered(s.thm2_refined, s.thm2_coarse)) s.violation = "thm2_refined > thm2_coarse";
  return s;
}

int cmd_train(const ExperimentConfig& config, std::ostream& log) { return run_training(config, log).exit_code; }

int cmd_verify_bounds(const ExperimentConfig& config, std::ostream& log) {
  config.validate();
  const std::filesystem::path dir = config.output_dir;
  std::filesystem::create_directories(dir);
  std::ostringstream csv;
  csv << "sample,seed,family,layers,bound_family,measured,recursion,refined,coarse\n";
  std::size_t violations = 0;
  for (std::size_t i = 0; i < config.n_models; ++i) {
    const std::uint64_t seed = config.train.seed * 1000003ULL + i;
    const BoundSample s = sample_bounds(i, seed, config.family, config.max_layers, config.gamma_scale);
    csv << i << ',' << seed << ',' << s.family << ',' << s.layers << ",thm1," << format_decimal(s.approx_measured)
        << ',' << format_decimal(s.delta_recursion) << ',' << format_decimal(s.thm1_refined) << ','
        << format_decimal(s.thm1_coarse) << '\n';
    csv << i << ',' << seed << ',' << s.family << ',' << s.layers << ",thm2," << format_decimal(s.equiv_measured)
        << ',' << format_decimal(s.epsilon_recursion) << ',' << format_decimal(s.thm2_refined) << ','
        << format_decimal(s.thm2_coarse) << '\n';
    if (!s.violation.empty()) {
      ++violations;
      log << "violation: sample " << i << " (seed " << seed << ", " << s.family << ", L=" << s.layers
          << "): " << s.violation << "\n";
    }
  }
  write_text(dir / "bounds.csv", csv.str());
  log << config.n_models << " models checked, " << violations << " violations; wrote " << (dir / "bounds.csv").string()
      << "\n";
  return violations == 0 ? 0 : 1;
}

int cmd_gradcheck(std::uint64_t seed, std::size_t image, std::size_t channels, bool corrupt_fixture, std::ostream& log) {
  GradcheckSizes sizes;
  sizes.image = image;
  sizes.channels = channels;
  const auto report = run_gradcheck_suite(seed, sizes, corrupt_fixture);
  for (const auto& c : report.cases) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-28s %6zu values  rel.err %.3e%s\n", c.name.c_str(), c.n_values, c.rel_error,
                  c.rel_error > kGradcheckTolerance ? "  FAIL" : "");
    log << buf;
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "worst relative error %.3e (tolerance %.0e)\n", report.worst(), kGradcheckTolerance);
  log << buf;
  return report.passed() ? 0 : 1;
}

int cmd_sweep(const ExperimentConfig& base, const std::string& param, const std::vector<double>& values,
              std::ostream& log) {
  static const std::vector<std::string> allowed{"eta_d", "gamma_init", "epsilon", "rho"};
  if (std::find(allowed.begin(), allowed.end(), param) == allowed.end())
    throw ConfigError("sweep: parameter must be one of eta_d, gamma_init, epsilon, rho; got " + param);
  if (values.empty()) throw ConfigError("sweep: no values given");
  const std::filesystem::path dir = base.output_dir;
  std::filesystem::create_directories(dir);

  std::ostringstream csv;
  csv << "param,value,status,epochs,steps,first_step_gamma_le_1e-2,max_abs_gamma,max_abs_lambda,max_u,"
         "eq_error_exact,loss_val_raw,loss_val_proj,test_loss_raw,test_loss_proj\n";
  std::vector<Series> gamma_series;
  int failures = 0;
  for (double v : values) {
    ExperimentConfig c = base;
    if (param == "eta_d") c.train.eta_d = v;
    if (param == "gamma_init") c.train.gamma_init = v;
    if (param == "epsilon") c.epsilon = v;
    if (param == "rho") c.train.rho = v;
    c.output_dir = (dir / (param + "=" + format_decimal(v))).string();
    std::ostringstream run_log;
    try {
      const auto out = run_training(c, run_log);
      const auto& s = out.summary;
      std::string first;
      Series series{param + "=" + format_decimal(v), {}, {}};
      for (const auto& row : out.run.trace) {
        const double g = max_abs(row.gamma);
        series.x.push_back(static_cast<double>(row.step));
        series.y.push_back(g);
        if (first.empty() && g <= 1e-2) first = std::to_string(row.step);
      }
      gamma_series.push_back(std::move(series));
      csv << param << ',' << format_decimal(v) << ',' << (out.run.diverged ? "diverged" : "ok") << ','
          << out.run.epoch << ',' << out.run.step << ',' << first;
      for (const char* key : {"max_abs_gamma", "max_abs_lambda", "max_u", "eq_error_exact", "loss_val_raw",
                              "loss_val_proj", "test_loss_raw", "test_loss_proj"})
        csv << ',' << format_decimal(s[key].get<double>());
      csv << '\n';
      if (out.exit_code != 0) ++failures;
      log << param << "=" << format_decimal(v) << ": " << run_log.str();
    } catch (const std::exception& e) {
      ++failures;
      csv << param << ',' << format_decimal(v) << ",error,,,,,,,,,,,\n";
      log << param << "=" << format_decimal(v) << ": error: " << e.what() << "\n";
    }
  }
  write_text(dir / "sweep.csv", csv.str());
  write_text(dir / "sweep.svg",
             line_chart_svg(gamma_series, {"max |gamma| by " + param, "step", "max |gamma|", false}));
  log << "wrote " << (dir / "sweep.csv").string() << " and sweep.svg\n";
  return failures == 0 ? 0 : 2;
}

int cmd_plot(const std::filesystem::path& trace_csv, const std::filesystem::path& out_dir, std::ostream& log) {
  std::filesystem::create_directories(out_dir);
  plot_trace(trace_csv, out_dir);
  log << "wrote gamma.svg, lambda.svg, u.svg, eq_error.svg to " << out_dir.string() << "\n";
  return 0;
}

}  // namespace ace
