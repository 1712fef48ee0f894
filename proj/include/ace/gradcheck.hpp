#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ace/tensor.hpp"

namespace ace {

inline constexpr double kGradcheckStep = 1e-5;
inline constexpr double kGradcheckTolerance = 1e-5;

/// Central-difference check of a scalar loss against reverse mode.
///
/// `params` are leaves captured by `loss`; they are perturbed in place and
/// restored. Returns ||analytic - numeric|| / max(||analytic||, ||numeric||, tiny)
/// over all parameters jointly; an empty parameter list returns 0.
double gradcheck(const std::function<Tensor()>& loss, std::vector<Tensor> params, double h = kGradcheckStep);

struct GradcheckCase {
  std::string name;
  std::size_t n_values = 0;
  double rel_error = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckCase> cases;
  double worst() const;
  bool passed(double tolerance = kGradcheckTolerance) const { return worst() <= tolerance; }
};

struct GradcheckSizes {
  std::size_t matrix = 3;
  std::size_t image = 5;
  std::size_t channels = 2;
  std::size_t set_points = 4;
  std::size_t set_dim = 3;
};

/// Every tensor op, every layer kind, a homotopic model, and both Lagrangians.
/// With `corrupt_fixture` an op with a deliberately wrong backward rule is added.
GradcheckReport run_gradcheck_suite(std::uint64_t seed, const GradcheckSizes& sizes = {},
                                    bool corrupt_fixture = false);

/// a^2 with backward 3a instead of 2a; exists only to prove the harness can fail.
Tensor corrupted_square(const Tensor& a);

}  // namespace ace
