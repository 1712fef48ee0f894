#include "ace/linalg.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ace::linalg {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMatrix> view(std::span<const double> matrix, std::size_t rows, std::size_t cols) {
  if (matrix.size() != rows * cols) throw std::invalid_argument("linalg: matrix size does not match its shape");
  return {matrix.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

}  // namespace

double spectral_norm(std::span<const double> matrix, std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) return 0.0;
  auto a = view(matrix, rows, cols);
  Eigen::MatrixXd gram = rows >= cols ? Eigen::MatrixXd(a.transpose() * a) : Eigen::MatrixXd(a * a.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw std::runtime_error("linalg: eigen solver failed");
  return std::sqrt(std::max(0.0, solver.eigenvalues().maxCoeff()));
}

double certified_spectral_norm(std::span<const double> matrix, std::size_t rows, std::size_t cols) {
  return spectral_norm(matrix, rows, cols) * (1.0 + kCertificateMargin);
}

std::vector<double> singular_values(std::span<const double> matrix, std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) return {};
  Eigen::MatrixXd a = view(matrix, rows, cols);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  const auto& s = svd.singularValues();
  return {s.data(), s.data() + s.size()};
}

}  // namespace ace::linalg
