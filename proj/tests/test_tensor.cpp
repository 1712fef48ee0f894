#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "ace/tensor.hpp"

using namespace ace;

namespace {

Tensor randn(Shape shape, std::mt19937_64& rng, bool grad = true) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = n(rng);
  return Tensor(std::move(shape), std::move(v), grad);
}

// Central differences computed here, independently of the library's gradcheck.
std::vector<double> numeric_grad(const std::function<double()>& f, Tensor& p, double h = 1e-5) {
  std::vector<double> g(p.numel());
  auto v = p.mutable_values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double s = v[i];
    v[i] = s + h;
    const double plus = f();
    v[i] = s - h;
    const double minus = f();
    v[i] = s;
    g[i] = (plus - minus) / (2 * h);
  }
  return g;
}

double rel_err(std::span<const double> a, const std::vector<double>& b) {
  double d = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    d += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(d) / std::max({std::sqrt(na), std::sqrt(nb), 1e-300});
}

std::vector<double> vals(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

TEST(Tensor, ElementwiseExamples) {
  EXPECT_EQ(vals(add(Tensor::vector({1, 2}), Tensor::vector({3, 4}))), (std::vector<double>{4, 6}));
  EXPECT_EQ(vals(relu(Tensor::vector({-1, 0, 2}))), (std::vector<double>{0, 0, 2}));
  EXPECT_DOUBLE_EQ(abs(Tensor::vector({-0.3})).at(0), 0.3);
  EXPECT_EQ(vals(mul(Tensor::scalar(2), Tensor::vector({1, -3}))), (std::vector<double>{2, -6}));
}

TEST(Tensor, ShapeInvariant) {
  EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), ShapeError);
  const Tensor t = Tensor::zeros({2, 0, 3});
  EXPECT_EQ(t.numel(), 0u);
}

TEST(Tensor, BinaryShapeMismatchNamesBothShapes) {
  try {
    add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2}));
    FAIL();
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[3,2]"), std::string::npos) << msg;
  }
}

TEST(Tensor, MatmulExamples) {
  const Tensor I({2, 2}, {1, 0, 0, 1});
  const Tensor A({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(vals(matmul(I, A)), vals(A));
  EXPECT_EQ(vals(matmul(Tensor({1, 2}, {1, 0}), Tensor({2, 1}, {2, 5}))), (std::vector<double>{2}));
  EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
}

TEST(Tensor, MatmulGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  Tensor A = randn({3, 3}, rng), B = randn({3, 3}, rng);
  sum(matmul(A, B)).backward();
  NoGradGuard guard;
  const auto f = [&] { return sum(matmul(A, B)).item(); };
  EXPECT_LE(rel_err(A.grad(), numeric_grad(f, A)), 1e-6);
  EXPECT_LE(rel_err(B.grad(), numeric_grad(f, B)), 1e-6);
}

TEST(Tensor, Conv2dExamples) {
  const Tensor x({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const Tensor k2({1, 1, 1, 1}, {2});
  auto y = conv2d(x, k2);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_DOUBLE_EQ(y.at(i), 2 * x.at(i));

  // Impulse at the centre of a 5x5 image reproduces the kernel around it.
  std::vector<double> delta(25, 0.0);
  delta[12] = 1.0;
  const Tensor kernel({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  auto out = conv2d(Tensor({1, 5, 5}, delta), kernel);
  // Cross-correlation: out[r, c] = sum K[a, b] x[r + a - 1, c + b - 1], so the kernel appears flipped.
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      EXPECT_DOUBLE_EQ(out.at(static_cast<std::size_t>((2 + 1 - a) * 5 + (2 + 1 - b))), kernel.at(a * 3 + b));
  EXPECT_THROW(conv2d(x, Tensor::zeros({1, 1, 2, 2})), ShapeError);
  EXPECT_THROW(conv2d(x, Tensor::zeros({1, 2, 3, 3})), ShapeError);
}

TEST(Tensor, Conv2dGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  Tensor x = randn({2, 5, 5}, rng), k = randn({3, 2, 3, 3}, rng);
  const Tensor w = randn({3, 5, 5}, rng, false);
  sum(conv2d(x, k) * w).backward();
  NoGradGuard guard;
  const auto f = [&] { return sum(conv2d(x, k) * w).item(); };
  EXPECT_LE(rel_err(x.grad(), numeric_grad(f, x)), 1e-6);
  EXPECT_LE(rel_err(k.grad(), numeric_grad(f, k)), 1e-6);
}

TEST(Tensor, Reductions) {
  EXPECT_DOUBLE_EQ(sum(Tensor::vector({1, 2, 3})).item(), 6);
  EXPECT_DOUBLE_EQ(l2_norm(Tensor::vector({3, 4})).item(), 5);
  EXPECT_EQ(vals(mean(Tensor({2, 2}, {1, 3, 3, 5}), {0})), (std::vector<double>{2, 4}));
  EXPECT_EQ(vals(sum(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}), {1})), (std::vector<double>{6, 15}));
  EXPECT_THROW(sum(Tensor::zeros({2, 2}), {2}), ShapeError);
}

TEST(Tensor, BackwardExamples) {
  Tensor x = Tensor::scalar(3, true);
  square(x).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 6);

  Tensor r = Tensor::vector({-1, 2}, true);
  sum(relu(r)).backward();
  EXPECT_EQ(std::vector<double>(r.grad().begin(), r.grad().end()), (std::vector<double>{0, 1}));

  Tensor k = Tensor::vector({0.0}, true);
  sum(relu(k)).backward();
  EXPECT_EQ(k.grad()[0], 0.0);
  Tensor z = Tensor::vector({0.0}, true);
  sum(abs(z)).backward();
  EXPECT_EQ(z.grad()[0], 0.0);

  EXPECT_THROW(Tensor::vector({1, 2}, true).backward(), ShapeError);
}

TEST(Tensor, RepeatedBackwardAccumulates) {
  Tensor x = Tensor::scalar(2, true);
  square(x).backward();
  square(x).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 8);
  x.zero_grad();
  square(x).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 4);
}

TEST(Tensor, TwoLayerMlpGradients) {
  std::mt19937_64 rng(11);
  Tensor x = randn({4, 3}, rng, false), y = randn({4, 2}, rng, false);
  Tensor W1 = randn({3, 5}, rng), W2 = randn({5, 2}, rng);
  const auto loss = [&] { return sum(square(matmul(relu(matmul(x, W1)), W2) - y)); };
  loss().backward();
  NoGradGuard guard;
  const auto f = [&] { return loss().item(); };
  EXPECT_LE(rel_err(W1.grad(), numeric_grad(f, W1)), 1e-5);
  EXPECT_LE(rel_err(W2.grad(), numeric_grad(f, W2)), 1e-5);
}

TEST(Tensor, TapeFreeForwardMatchesTaped) {
  std::mt19937_64 rng(5);
  Tensor a = randn({3, 4}, rng), b = randn({4, 2}, rng);
  const auto taped = vals(l2_norm(relu(matmul(a, b)), {1}));
  std::vector<double> untaped;
  {
    NoGradGuard guard;
    untaped = vals(l2_norm(relu(matmul(a, b)), {1}));
  }
  EXPECT_EQ(taped, untaped);
}

TEST(Tensor, StackReshapeGather) {
  const Tensor a = Tensor::vector({1, 2}), b = Tensor::vector({3, 4});
  std::vector<Tensor> parts{a, b};
  const Tensor s = stack(parts);
  EXPECT_EQ(s.shape(), (Shape{2, 2}));
  EXPECT_EQ(vals(reshape(s, {4})), (std::vector<double>{1, 2, 3, 4}));
  EXPECT_EQ(vals(gather(s, {3, 0}, {2})), (std::vector<double>{4, 1}));
  EXPECT_THROW(reshape(s, {3}), ShapeError);
}
