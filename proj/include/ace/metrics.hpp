#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ace/groups.hpp"
#include "ace/layers.hpp"

namespace ace {

/// The finite group acting on a space: C4 for images and regular maps, S_n for sets and vectors.
Group group_for(const Representation& rep);

struct EquivarianceOptions {
  enum class Mode { exact, monte_carlo };
  Mode mode = Mode::exact;
  std::size_t n_samples = 5;
  /// Draw distinct elements (needs an enumerable group and n_samples <= |G|).
  bool without_replacement = false;
  std::uint64_t seed = 0;
};

struct EquivarianceReport {
  /// max over every enumerated g of ||rho_Y(g) f(x) - f(rho_X(g) x)||.
  double exact_error = 0.0;
  /// Mean of the same quantity over the enumerated group.
  double mean_error = 0.0;
  /// Mean over sampled elements.
  double mc_error = 0.0;
  std::size_t n_samples = 0;
  std::vector<GroupElement> elements;
  std::vector<double> per_element;
};

/// Exact mode fills exact_error and mean_error; Monte-Carlo mode fills mc_error.
/// Exact mode on a group too large to enumerate throws std::invalid_argument.
EquivarianceReport equivariance_error(const HomotopicModel& model, const Tensor& x, const Group& group,
                                      const EquivarianceOptions& options = {});
/// Exact error over the group acting on the model's input space.
double exact_equivariance_error(const HomotopicModel& model, const Tensor& x);

/// ||f_{theta,gamma}(x) - f_{theta,0}(x)||.
double approximation_error(const HomotopicModel& model, const Tensor& x);

/// Per-layer certified constants.
struct ModelConstants {
  std::vector<double> eq_lipschitz;   ///< M of each equivariant layer.
  std::vector<double> neq_lipschitz;  ///< Lipschitz constant of each non-equivariant branch.
  std::vector<double> neq_bound;      ///< B of each non-equivariant branch.
  double rep_bound = 1.0;             ///< B_rho of the group actions.
  double readout_bound = 1.0;

  std::size_t depth() const { return eq_lipschitz.size(); }
  /// max_i max(M_eq_i, L_neq_i); either branch alone can carry the signal.
  double M() const;
  double B() const;
};

ModelConstants certify(const HomotopicModel& model, ConvBound conv = ConvBound::frobenius);

enum class BoundKind { thm1_coarse, thm1_refined, thm2_coarse, thm2_refined, delta_recursion, epsilon_recursion };
std::string to_string(BoundKind kind);

struct BoundCertificate {
  BoundKind kind = BoundKind::thm1_refined;
  double value = 0.0;
  std::vector<double> M_per_layer;
  std::vector<double> B_per_layer;
  double M = 0.0;
  double B = 0.0;
  double C = 0.0;
  double gamma_bar = 0.0;
  std::size_t L = 0;
  double x_norm = 0.0;
  double readout = 1.0;
};

struct BoundPair {
  BoundCertificate coarse;
  BoundCertificate refined;
};

struct RecursionPair {
  BoundCertificate delta;
  BoundCertificate epsilon;
};

// Closed forms on scalar constants. `gamma` holds gamma_1..gamma_L.

/// [sum_{k<L} (1+g)^k] g B M^{L-1} |x|, g = max |gamma_i|.
double thm1_coarse_value(std::span<const double> gamma, double M, double B, double x_norm);
/// [|g_1| + sum_{k=1}^{L-1} |g_{k+1}| (1 + (1/k) sum_{j<=k} |g_j|)^k] B M^{L-1} |x|.
double thm1_refined_value(std::span<const double> gamma, double M, double B, double x_norm);
/// 2 g (M + C g)^{L-1} L B^2 |x| with C = max(B, 1, M).
double thm2_coarse_value(std::span<const double> gamma, double M, double B, double x_norm);
/// 2 B^2 M^{L-1} sum_k |g_k| (1 + C/(L-1) sum_{j!=k} |g_j|)^{L-1} |x| with C = max(B/M, 1),
/// evaluated as (M + max(B, M)/(L-1) ...)^{L-1} so that M = 0 is well defined.
double thm2_refined_value(std::span<const double> gamma, double M, double B, double x_norm);

/// delta_i = M_i delta_{i-1} + |g_i| B_i |z_{i-1}|, delta_0 = 0.
double delta_recursion_value(std::span<const double> gamma, std::span<const double> M_eq, std::span<const double> B,
                             std::span<const double> z_norms);
/// eps_i = (M_i + |g_i| B_i) eps_{i-1} + 2 |g_i| B_i B_rho |z_{i-1}|, eps_0 = 0.
double epsilon_recursion_value(std::span<const double> gamma, std::span<const double> M_eq,
                               std::span<const double> B, double rep_bound, std::span<const double> z_norms);

/// Theorem forms with M = max_i M_i and B = max_i B_i (Thm-2 also takes B_rho into B),
/// scaled by the readout's operator norm.
BoundPair thm1_bounds(const HomotopicModel& model, double x_norm, const ModelConstants& constants);
BoundPair thm2_bounds(const HomotopicModel& model, double x_norm, const ModelConstants& constants);
BoundPair thm1_bounds(const HomotopicModel& model, double x_norm);
BoundPair thm2_bounds(const HomotopicModel& model, double x_norm);

/// Per-layer recursions driven by the actual activation norms of a forward pass on x.
RecursionPair recursion_bounds(const HomotopicModel& model, const Tensor& x, const ModelConstants& constants);
RecursionPair recursion_bounds(const HomotopicModel& model, const Tensor& x);

}  // namespace ace
