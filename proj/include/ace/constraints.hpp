#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ace/tensor.hpp"

namespace ace {

enum class ConstraintMode { strict, resilient };
std::string to_string(ConstraintMode mode);

/// How the resilient slack moves. `descent` is u <- [u - eta_p (rho u - lambda)]_+,
/// the gradient step on the resilient Lagrangian. `printed_ascent` keeps the
/// opposite sign (u <- [u + eta_p (rho u - lambda)]_+) for comparison runs only.
enum class SlackRule { descent, printed_ascent };

/// Multipliers lambda_i, slacks u_i and the slack price rho.
///
/// Strict mode never reads or writes `u`. Resilient mode keeps lambda, u >= 0.
struct DualState {
  ConstraintMode mode = ConstraintMode::strict;
  std::vector<double> lambda;
  std::vector<double> u;
  double rho = 1.0;

  static DualState strict(std::size_t layers);
  static DualState resilient(std::size_t layers, double rho = 1.0);

  std::size_t size() const { return lambda.size(); }
  /// Throws std::logic_error if a resilient multiplier or slack is negative.
  void check_invariants() const;
};

struct StepConfig {
  ConstraintMode mode = ConstraintMode::strict;
  double eta_p = 1e-2;
  /// Dual rate; defaults to eta_p.
  std::optional<double> eta_d;
  double gamma_init = 1.0;
  SlackRule slack_rule = SlackRule::descent;

  double dual_rate() const { return eta_d.value_or(eta_p); }
  void validate() const;
};

/// J0 + sum_i lambda_i gamma_i, with lambda held constant.
Tensor lagrangian_strict(const Tensor& j0, const Tensor& gamma, const DualState& state);

/// J0 + (rho/2) ||u||^2 + sum_i lambda_i (|gamma_i| - u_i), lambda constant.
/// The slacks enter as a fresh leaf built from `state.u`.
Tensor lagrangian_resilient(const Tensor& j0, const Tensor& gamma, const DualState& state);

/// Same, with the caller's slack tensor so its gradient (rho u - lambda) can be read back.
Tensor lagrangian_resilient(const Tensor& j0, const Tensor& gamma, const Tensor& slack, std::span<const double> lambda,
                            double rho);

/// First-order update applied to parameters whose gradients are populated.
class PrimalOptimizer {
 public:
  virtual ~PrimalOptimizer() = default;
  /// Throws std::logic_error if a parameter carries no gradient.
  virtual void step(std::span<Tensor> parameters) = 0;
  virtual std::string name() const = 0;
  virtual std::vector<std::vector<double>> state() const { return {}; }
  virtual void restore(std::vector<std::vector<double>> /*state*/) {}
  virtual std::unique_ptr<PrimalOptimizer> clone() const = 0;
};

/// theta <- theta - eta_p grad. The reference optimizer.
class GradientDescent final : public PrimalOptimizer {
 public:
  explicit GradientDescent(double learning_rate) : learning_rate_(learning_rate) {}
  void step(std::span<Tensor> parameters) override;
  std::string name() const override { return "sgd"; }
  std::unique_ptr<PrimalOptimizer> clone() const override { return std::make_unique<GradientDescent>(*this); }

 private:
  double learning_rate_;
};

/// Heavy-ball momentum: v <- beta v + grad, theta <- theta - eta_p v.
class Momentum final : public PrimalOptimizer {
 public:
  Momentum(double learning_rate, double beta) : learning_rate_(learning_rate), beta_(beta) {}
  void step(std::span<Tensor> parameters) override;
  std::string name() const override { return "momentum"; }
  std::vector<std::vector<double>> state() const override { return velocity_; }
  void restore(std::vector<std::vector<double>> state) override { velocity_ = std::move(state); }
  std::unique_ptr<PrimalOptimizer> clone() const override { return std::make_unique<Momentum>(*this); }

 private:
  double learning_rate_;
  double beta_;
  std::vector<std::vector<double>> velocity_;
};

/// Plain gradient step on every parameter (theta and gamma alike); the gamma
/// gradient already contains lambda_i s_i from the Lagrangian's backward pass.
void primal_step(std::span<Tensor> parameters, double eta_p);

/// lambda_i <- lambda_i + eta_d gamma_i, no projection.
void dual_step_strict(DualState& state, std::span<const double> gamma, double eta_d);

/// u_i <- [u_i - eta_p (rho u_i - lambda_i)]_+ and
/// lambda_i <- [lambda_i + eta_d (|gamma_i| - u_i)]_+, both from the old values.
void dual_step_resilient(DualState& state, std::span<const double> gamma, double eta_p, double eta_d,
                         SlackRule rule = SlackRule::descent);

}  // namespace ace
