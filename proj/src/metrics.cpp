#include "ace/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace ace {
namespace {

double distance(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("distance: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = a.at(i) - b.at(i);
    s += d * d;
  }
  return std::sqrt(s);
}

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double max_of(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, x);
  return m;
}

void require_gamma(const char* op, std::span<const double> gamma) {
  if (gamma.empty()) throw std::invalid_argument(std::string(op) + ": model has no layers");
}

double element_error(const HomotopicModel& model, const Tensor& x, const Tensor& fx, const GroupElement& g) {
  Tensor lhs = apply(g, model.output_rep(), fx);
  Tensor rhs = model.forward(apply(g, model.input_rep(), x));
  return distance(lhs, rhs);
}

BoundCertificate base_certificate(BoundKind kind, const HomotopicModel& model, const ModelConstants& c, double x_norm) {
  BoundCertificate cert;
  cert.kind = kind;
  for (std::size_t i = 0; i < c.depth(); ++i) cert.M_per_layer.push_back(std::max(c.eq_lipschitz[i], c.neq_lipschitz[i]));
  cert.B_per_layer = c.neq_bound;
  cert.M = c.M();
  cert.B = c.B();
  cert.gamma_bar = max_abs(model.gamma_values());
  cert.L = model.depth();
  cert.x_norm = x_norm;
  cert.readout = c.readout_bound;
  return cert;
}

void require_matching(const HomotopicModel& model, const ModelConstants& c) {
  if (c.depth() != model.depth() || c.neq_bound.size() != model.depth() || c.neq_lipschitz.size() != model.depth())
    throw std::invalid_argument("bounds: constants certified for a model of different depth");
}

}  // namespace

Group group_for(const Representation& rep) {
  switch (rep.kind) {
    case SpaceKind::image:
    case SpaceKind::regular: return Group::c4();
    case SpaceKind::set: return Group::symmetric(rep.shape.at(0));
    case SpaceKind::vector: return Group::symmetric(rep.shape.at(0));
  }
  throw std::logic_error("group_for: unknown space");
}

EquivarianceReport equivariance_error(const HomotopicModel& model, const Tensor& x, const Group& group,
                                      const EquivarianceOptions& options) {
  NoGradGuard no_grad;
  const Tensor fx = model.forward(x);
  EquivarianceReport report;
  if (options.mode == EquivarianceOptions::Mode::exact) {
    if (!group.enumerable())
      throw std::invalid_argument("equivariance_error: " + group.name() + " is too large to enumerate, use monte_carlo");
    report.elements = group.elements();
    for (const auto& g : report.elements) report.per_element.push_back(element_error(model, x, fx, g));
    report.exact_error = max_of(report.per_element);
    report.mean_error = std::accumulate(report.per_element.begin(), report.per_element.end(), 0.0) /
                        static_cast<double>(report.per_element.size());
    return report;
  }

  if (options.n_samples == 0) throw std::invalid_argument("equivariance_error: monte_carlo needs n_samples >= 1");
  std::mt19937_64 rng(options.seed);
  if (options.without_replacement) {
    if (!group.enumerable() || options.n_samples > group.order())
      throw std::invalid_argument("equivariance_error: cannot draw " + std::to_string(options.n_samples) +
                                  " distinct elements of " + group.name());
    auto all = group.elements();
    std::shuffle(all.begin(), all.end(), rng);
    report.elements.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(options.n_samples));
  } else {
    for (std::size_t s = 0; s < options.n_samples; ++s) report.elements.push_back(group.sample(rng));
  }
  for (const auto& g : report.elements) report.per_element.push_back(element_error(model, x, fx, g));
  report.n_samples = options.n_samples;
  report.mc_error = std::accumulate(report.per_element.begin(), report.per_element.end(), 0.0) /
                    static_cast<double>(report.n_samples);
  return report;
}

double exact_equivariance_error(const HomotopicModel& model, const Tensor& x) {
  return equivariance_error(model, x, group_for(model.input_rep())).exact_error;
}

double approximation_error(const HomotopicModel& model, const Tensor& x) {
  NoGradGuard no_grad;
  return distance(model.forward(x), project_equivariant(model).forward(x));
}

double ModelConstants::M() const {
  double m = 0.0;
  for (std::size_t i = 0; i < depth(); ++i) m = std::max({m, eq_lipschitz[i], neq_lipschitz[i]});
  return m;
}

double ModelConstants::B() const { return max_of(neq_bound); }

ModelConstants certify(const HomotopicModel& model, ConvBound conv) {
  ModelConstants c;
  for (const auto& layer : model.layers()) {
    c.eq_lipschitz.push_back(lipschitz_bound(layer.eq, conv));
    c.neq_lipschitz.push_back(lipschitz_bound(layer.neq));
    c.neq_bound.push_back(operator_bound(layer.neq));
    c.rep_bound = std::max(c.rep_bound, layer.eq.input_rep().operator_bound());
  }
  c.rep_bound = std::max(c.rep_bound, model.output_rep().operator_bound());
  c.readout_bound = model.readout_bound();
  return c;
}

std::string to_string(BoundKind kind) {
  switch (kind) {
    case BoundKind::thm1_coarse: return "thm1_coarse";
    case BoundKind::thm1_refined: return "thm1_refined";
    case BoundKind::thm2_coarse: return "thm2_coarse";
    case BoundKind::thm2_refined: return "thm2_refined";
    case BoundKind::delta_recursion: return "delta_recursion";
    case BoundKind::epsilon_recursion: return "epsilon_recursion";
  }
  return "?";
}

double thm1_coarse_value(std::span<const double> gamma, double M, double B, double x_norm) {
  require_gamma("thm1_coarse", gamma);
  const double g = max_abs(gamma);
  const std::size_t L = gamma.size();
  double series = 0.0;
  for (std::size_t k = 0; k < L; ++k) series += std::pow(1.0 + g, static_cast<double>(k));
  return series * g * B * std::pow(M, static_cast<double>(L - 1)) * x_norm;
}

double thm1_refined_value(std::span<const double> gamma, double M, double B, double x_norm) {
  require_gamma("thm1_refined", gamma);
  const std::size_t L = gamma.size();
  double total = std::abs(gamma[0]);
  double prefix = std::abs(gamma[0]);
  for (std::size_t k = 1; k < L; ++k) {
    const double kd = static_cast<double>(k);
    total += std::abs(gamma[k]) * std::pow(1.0 + prefix / kd, kd);
    prefix += std::abs(gamma[k]);
  }
  return total * B * std::pow(M, static_cast<double>(L - 1)) * x_norm;
}

double thm2_coarse_value(std::span<const double> gamma, double M, double B, double x_norm) {
  require_gamma("thm2_coarse", gamma);
  const double g = max_abs(gamma);
  const double L = static_cast<double>(gamma.size());
  const double C = std::max({B, 1.0, M});
  return 2.0 * g * std::pow(M + C * g, L - 1.0) * L * B * B * x_norm;
}

double thm2_refined_value(std::span<const double> gamma, double M, double B, double x_norm) {
  require_gamma("thm2_refined", gamma);
  const std::size_t L = gamma.size();
  double abs_sum = 0.0;
  for (double g : gamma) abs_sum += std::abs(g);
  if (L == 1) return 2.0 * B * B * std::abs(gamma[0]) * x_norm;
  const double MC = std::max(B, M);
  const double Lm1 = static_cast<double>(L - 1);
  double total = 0.0;
  for (std::size_t k = 0; k < L; ++k) {
    const double others = abs_sum - std::abs(gamma[k]);
    total += std::abs(gamma[k]) * std::pow(M + MC / Lm1 * others, Lm1);
  }
  return 2.0 * B * B * total * x_norm;
}

double delta_recursion_value(std::span<const double> gamma, std::span<const double> M_eq, std::span<const double> B,
                             std::span<const double> z_norms) {
  if (M_eq.size() != gamma.size() || B.size() != gamma.size() || z_norms.size() < gamma.size())
    throw std::invalid_argument("delta_recursion: per-layer inputs disagree in length");
  double delta = 0.0;
  for (std::size_t i = 0; i < gamma.size(); ++i) delta = M_eq[i] * delta + std::abs(gamma[i]) * B[i] * z_norms[i];
  return delta;
}

double epsilon_recursion_value(std::span<const double> gamma, std::span<const double> M_eq,
                               std::span<const double> B, double rep_bound, std::span<const double> z_norms) {
  if (M_eq.size() != gamma.size() || B.size() != gamma.size() || z_norms.size() < gamma.size())
    throw std::invalid_argument("epsilon_recursion: per-layer inputs disagree in length");
  double eps = 0.0;
  for (std::size_t i = 0; i < gamma.size(); ++i) {
    const double g = std::abs(gamma[i]);
    eps = (M_eq[i] + g * B[i]) * eps + 2.0 * g * B[i] * rep_bound * z_norms[i];
  }
  return eps;
}

BoundPair thm1_bounds(const HomotopicModel& model, double x_norm, const ModelConstants& constants) {
  require_matching(model, constants);
  const auto gamma = model.gamma_values();
  BoundPair out{base_certificate(BoundKind::thm1_coarse, model, constants, x_norm),
                base_certificate(BoundKind::thm1_refined, model, constants, x_norm)};
  const double M = constants.M(), B = constants.B(), R = constants.readout_bound;
  out.coarse.value = R * thm1_coarse_value(gamma, M, B, x_norm);
  out.refined.value = R * thm1_refined_value(gamma, M, B, x_norm);
  return out;
}

BoundPair thm2_bounds(const HomotopicModel& model, double x_norm, const ModelConstants& constants) {
  require_matching(model, constants);
  const auto gamma = model.gamma_values();
  BoundPair out{base_certificate(BoundKind::thm2_coarse, model, constants, x_norm),
                base_certificate(BoundKind::thm2_refined, model, constants, x_norm)};
  const double M = constants.M();
  const double B = std::max(constants.B(), constants.rep_bound);
  const double R = constants.readout_bound;
  out.coarse.B = out.refined.B = B;
  out.coarse.C = std::max({B, 1.0, M});
  out.refined.C = M > 0.0 ? std::max(B / M, 1.0) : 1.0;
  out.coarse.value = R * thm2_coarse_value(gamma, M, B, x_norm);
  out.refined.value = R * thm2_refined_value(gamma, M, B, x_norm);
  return out;
}

BoundPair thm1_bounds(const HomotopicModel& model, double x_norm) { return thm1_bounds(model, x_norm, certify(model)); }
BoundPair thm2_bounds(const HomotopicModel& model, double x_norm) { return thm2_bounds(model, x_norm, certify(model)); }

RecursionPair recursion_bounds(const HomotopicModel& model, const Tensor& x, const ModelConstants& constants) {
  require_matching(model, constants);
  std::vector<double> z_norms;
  {
    NoGradGuard no_grad;
    const auto trace = model.forward_trace(x);
    for (const auto& z : trace.z) z_norms.push_back(norm2(z.values()));
  }
  const auto gamma = model.gamma_values();
  const double R = constants.readout_bound;
  RecursionPair out{base_certificate(BoundKind::delta_recursion, model, constants, z_norms[0]),
                    base_certificate(BoundKind::epsilon_recursion, model, constants, z_norms[0])};
  out.delta.M_per_layer = out.epsilon.M_per_layer = constants.eq_lipschitz;
  out.delta.value = R * delta_recursion_value(gamma, constants.eq_lipschitz, constants.neq_bound, z_norms);
  out.epsilon.value =
      R * epsilon_recursion_value(gamma, constants.eq_lipschitz, constants.neq_bound, constants.rep_bound, z_norms);
  return out;
}

RecursionPair recursion_bounds(const HomotopicModel& model, const Tensor& x) {
  return recursion_bounds(model, x, certify(model));
}

}  // namespace ace
