#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ace::linalg {

/// Relative slack added to floating-point spectral norms before they are
/// reported as certified upper bounds.
inline constexpr double kCertificateMargin = 1e-10;

/// Largest singular value of a row-major rows x cols matrix, from the
/// eigenvalues of the smaller Gram matrix.
double spectral_norm(std::span<const double> matrix, std::size_t rows, std::size_t cols);

/// spectral_norm scaled up by kCertificateMargin.
double certified_spectral_norm(std::span<const double> matrix, std::size_t rows, std::size_t cols);

/// All singular values, descending (Jacobi SVD; intended for small matrices).
std::vector<double> singular_values(std::span<const double> matrix, std::size_t rows, std::size_t cols);

}  // namespace ace::linalg
