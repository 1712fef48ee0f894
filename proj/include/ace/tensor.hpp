#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ace {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Raised when operand shapes are incompatible; the message names both shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

using BackwardFn =
    std::function<void(std::span<const double> out_grad, std::span<std::vector<double>* const> parent_grads)>;

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::uint64_t id = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;
};

}  // namespace detail

/// Disables tape recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Dense row-major array of doubles with a reverse-mode gradient tape.
///
/// A Tensor is a handle: copies share the same storage and tape node. Use
/// deep_copy() for an independent leaf holding the same values.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);

  /// Builds the result of a custom differentiable op. `backward` receives the
  /// gradient of the output and one accumulation buffer per parent (nullptr
  /// for parents that do not require gradients).
  static Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                            detail::BackwardFn backward, const char* op);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  std::span<const double> values() const;
  double item() const;
  double at(std::size_t flat_index) const;

  /// Writable view of a leaf's values (parameter updates). Throws on non-leaves.
  std::span<double> mutable_values();

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Reverse-mode sweep from this scalar. Leaf gradients accumulate across calls.
  void backward() const;

  Tensor detach() const;
  Tensor deep_copy() const;
  const char* op_name() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

// Elementwise. Binary ops accept equal shapes or a single-element operand.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor square(const Tensor& a);
Tensor scale(const Tensor& a, double factor);

enum class ElementwiseOp { add, sub, mul, relu, abs, square };
Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b = Tensor());

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator*(double factor, const Tensor& a);
Tensor operator*(const Tensor& a, double factor);
Tensor operator-(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);

/// Same-padded cross-correlation. input: C_in x H x W, kernels: C_out x C_in x k x k, k odd.
Tensor conv2d(const Tensor& input, const Tensor& kernels);

Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, const std::vector<std::size_t>& axes);
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, const std::vector<std::size_t>& axes);
Tensor l2_norm(const Tensor& a);
Tensor l2_norm(const Tensor& a, const std::vector<std::size_t>& axes);

enum class ReduceOp { sum, mean, l2_norm };
Tensor reduce(ReduceOp op, const Tensor& a);
Tensor reduce(ReduceOp op, const Tensor& a, const std::vector<std::size_t>& axes);

Tensor reshape(const Tensor& a, Shape shape);

/// out[i] = a[source[i]]; the adjoint scatters. Index permutations (group
/// actions, kernel banks) are built on this.
Tensor gather(const Tensor& a, std::vector<std::size_t> source, Shape shape);

/// Stacks equally shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> parts);

/// Plain Euclidean norm of the values; no tape.
double norm2(std::span<const double> values);

}  // namespace ace
