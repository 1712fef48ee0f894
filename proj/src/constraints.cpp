#include "ace/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ace {
namespace {

void require_length(const char* op, std::size_t gamma, std::size_t duals) {
  if (gamma != duals) {
    throw ShapeError(std::string(op) + ": " + std::to_string(gamma) + " gammas but " + std::to_string(duals) +
                     " multipliers");
  }
}

void require_grad(const Tensor& p) {
  if (!p.has_grad()) throw std::logic_error("primal_step: parameter of shape " + to_string(p.shape()) + " has no gradient");
}

}  // namespace

std::string to_string(ConstraintMode mode) { return mode == ConstraintMode::strict ? "strict" : "resilient"; }

DualState DualState::strict(std::size_t layers) {
  DualState s;
  s.mode = ConstraintMode::strict;
  s.lambda.assign(layers, 0.0);
  return s;
}

DualState DualState::resilient(std::size_t layers, double rho) {
  if (!(rho > 0.0)) throw std::invalid_argument("resilient dual state: rho must be positive");
  DualState s;
  s.mode = ConstraintMode::resilient;
  s.lambda.assign(layers, 0.0);
  s.u.assign(layers, 0.0);
  s.rho = rho;
  return s;
}

void DualState::check_invariants() const {
  if (mode != ConstraintMode::resilient) return;
  if (u.size() != lambda.size()) throw std::logic_error("dual state: slack and multiplier counts differ");
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    if (lambda[i] < 0.0 || u[i] < 0.0) {
      throw std::logic_error("dual state: negative multiplier or slack at constraint " + std::to_string(i + 1));
    }
  }
}

void StepConfig::validate() const {
  if (!(eta_p > 0.0)) throw std::invalid_argument("step config: eta_p must be positive");
  if (!(dual_rate() >= 0.0)) throw std::invalid_argument("step config: eta_d must be non-negative");
}

Tensor lagrangian_strict(const Tensor& j0, const Tensor& gamma, const DualState& state) {
  require_length("lagrangian_strict", gamma.numel(), state.size());
  Tensor lambda = Tensor(gamma.shape(), state.lambda);
  return j0 + sum(lambda * gamma);
}

Tensor lagrangian_resilient(const Tensor& j0, const Tensor& gamma, const Tensor& slack, std::span<const double> lambda,
                            double rho) {
  require_length("lagrangian_resilient", gamma.numel(), lambda.size());
  require_length("lagrangian_resilient", slack.numel(), lambda.size());
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    if (lambda[i] < 0.0 || slack.at(i) < 0.0)
      throw std::logic_error("lagrangian_resilient: negative multiplier or slack at constraint " + std::to_string(i + 1));
  }
  Tensor lam(gamma.shape(), std::vector<double>(lambda.begin(), lambda.end()));
  Tensor u = reshape(slack, gamma.shape());
  return j0 + scale(sum(square(u)), 0.5 * rho) + sum(lam * (abs(gamma) - u));
}

Tensor lagrangian_resilient(const Tensor& j0, const Tensor& gamma, const DualState& state) {
  if (state.mode != ConstraintMode::resilient) throw std::logic_error("lagrangian_resilient: dual state is strict");
  Tensor slack = Tensor::vector(state.u, true);
  return lagrangian_resilient(j0, gamma, slack, state.lambda, state.rho);
}

void GradientDescent::step(std::span<Tensor> parameters) {
  for (auto& p : parameters) require_grad(p);
  for (auto& p : parameters) {
    auto g = p.grad();
    auto v = p.mutable_values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= learning_rate_ * g[i];
  }
}

void Momentum::step(std::span<Tensor> parameters) {
  for (auto& p : parameters) require_grad(p);
  if (velocity_.size() != parameters.size()) {
    velocity_.clear();
    for (const auto& p : parameters) velocity_.emplace_back(p.numel(), 0.0);
  }
  for (std::size_t k = 0; k < parameters.size(); ++k) {
    auto g = parameters[k].grad();
    auto v = parameters[k].mutable_values();
    auto& vel = velocity_[k];
    for (std::size_t i = 0; i < v.size(); ++i) {
      vel[i] = beta_ * vel[i] + g[i];
      v[i] -= learning_rate_ * vel[i];
    }
  }
}

void primal_step(std::span<Tensor> parameters, double eta_p) { GradientDescent(eta_p).step(parameters); }

void dual_step_strict(DualState& state, std::span<const double> gamma, double eta_d) {
  if (state.mode != ConstraintMode::strict) throw std::logic_error("dual_step_strict: dual state is resilient");
  require_length("dual_step_strict", gamma.size(), state.size());
  for (std::size_t i = 0; i < gamma.size(); ++i) state.lambda[i] += eta_d * gamma[i];
}

void dual_step_resilient(DualState& state, std::span<const double> gamma, double eta_p, double eta_d, SlackRule rule) {
  if (state.mode != ConstraintMode::resilient) throw std::logic_error("dual_step_resilient: dual state is strict");
  require_length("dual_step_resilient", gamma.size(), state.size());
  state.check_invariants();
  const double sign = rule == SlackRule::descent ? -1.0 : 1.0;
  for (std::size_t i = 0; i < gamma.size(); ++i) {
    const double u_old = state.u[i];
    const double lambda_old = state.lambda[i];
    state.u[i] = std::max(u_old + sign * eta_p * (state.rho * u_old - lambda_old), 0.0);
    state.lambda[i] = std::max(lambda_old + eta_d * (std::abs(gamma[i]) - u_old), 0.0);
  }
}

}  // namespace ace
