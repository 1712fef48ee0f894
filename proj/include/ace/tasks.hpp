#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ace/groups.hpp"
#include "ace/layers.hpp"
#include "ace/tensor.hpp"

namespace ace {

struct SymmetryBreakSpec {
  enum class Kind { none, subgroup_c2, arbitrary };
  double epsilon = 0.0;
  Kind kind = Kind::none;
};
std::string to_string(SymmetryBreakSpec::Kind kind);

struct Splits {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Seeded shuffle of 0..n-1 cut 80/10/10 (validation and test get at least one index when n >= 3).
Splits split_indices(std::size_t n, std::uint64_t seed);

struct Dataset {
  std::string recipe;
  std::uint64_t seed = 0;
  SymmetryBreakSpec symmetry;
  Representation input_rep;
  Representation target_rep;
  std::vector<Tensor> inputs;
  std::vector<Tensor> targets;
  Splits splits;

  std::size_t size() const { return inputs.size(); }
  /// Checks shapes, finiteness and that the splits partition the indices.
  void validate() const;
};

enum class C4Target { square, rectangle, nonsymmetric };
std::string to_string(C4Target target);
C4Target c4_target_from_string(const std::string& name);

/// Inputs a * (centered square of half-side h), h uniform in 1..H/4, a uniform in [0.5, 1].
/// Targets with the same a: square of half-side h+1 (C4-symmetric), rectangle of
/// half-width h+2 and half-height h (C2 only), or the h+1 square without its
/// top-right quadrant (no rotation symmetry). One channel, H x H.
/// `noise` adds i.i.d. N(0, noise^2) to every target pixel.
Dataset c4_toy(C4Target target, std::size_t n, std::size_t image_size, std::uint64_t seed, double noise = 0.0);

/// X ~ N(0,1) of shape n_points x d; y_i = x_i W + mean(X) V + epsilon w_i x_i with
/// w_i = (2i - (n-1))/(n-1). W has unit diagonal and +-1/2 on the first off-diagonals,
/// V = diag(1/2, -1/2, ...). `noise` adds independent N(0, noise^2) to the targets.
Dataset set_regression(std::size_t n_points, std::size_t d, double epsilon, std::size_t n_samples,
                       std::uint64_t seed, double noise = 0.0);

/// The symmetric part x_i W + mean(X) V and the break term w_i x_i, exposed for tests.
Tensor set_regression_symmetric(const Tensor& x);
Tensor set_regression_break(const Tensor& x);

/// (gamma - a)^2 with either gamma = 0 (strict) or |gamma| <= u, (rho/2) u^2 (resilient).
struct ScalarToy {
  enum class Kind { strict_kkt, resilient_kkt };
  Kind kind = Kind::strict_kkt;
  double a = 1.0;
  double rho = 1.0;
  double gamma_star = 0.0;
  double lambda_star = 0.0;
  double u_star = 0.0;

  double objective(double gamma) const { return (gamma - a) * (gamma - a); }
  double gradient(double gamma) const { return 2.0 * (gamma - a); }
};
ScalarToy scalar_toy(ScalarToy::Kind kind, double a, double rho = 1.0);

/// One-sample dataset and one-layer model whose training loss is exactly (gamma - a)^2
/// when only gamma is trained: input [[1]], target [[a]], zero equivariant weights and
/// a unit non-equivariant branch. Validation and test splits are empty, so
/// evaluation falls back to the training sample.
Dataset scalar_toy_dataset(const ScalarToy& toy);
HomotopicModel scalar_toy_model(double gamma_init);

/// Binary container: magic, version, recipe, seed, symmetry, splits, then shapes and doubles.
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);
/// One row per sample: index, split, flattened input, flattened target.
void write_dataset_csv(const Dataset& dataset, const std::filesystem::path& path);

}  // namespace ace
