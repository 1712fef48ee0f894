#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <filesystem>
#include <random>

#include "ace/layers.hpp"
#include "ace/linalg.hpp"
#include "ace/metrics.hpp"
#include "ace/serialization.hpp"

using namespace ace;
using namespace ace::linalg;

namespace {

Tensor randn(Shape shape, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = n(rng);
  return Tensor(std::move(shape), std::move(v));
}

double dist(const Tensor& a, const Tensor& b) { return norm2((a - b).values()); }

// sigma_max from the eigenvalues of W^T W: a different algorithm from the library's SVD and power iteration.
double eigen_sigma_max(std::span<const double> w, std::size_t rows, std::size_t cols) {
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = w[r * cols + c];
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.transpose() * m);
  return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

double max_layer_equivariance_error(const EquivariantLayer& layer, const Tensor& x) {
  const Group g = group_for(layer.input_rep());
  const Tensor fx = layer.forward(x);
  double worst = 0.0;
  for (const auto& e : g.elements())
    worst = std::max(worst, dist(layer.forward(apply(e, layer.input_rep(), x)), apply(e, layer.output_rep(), fx)));
  return worst;
}

}  // namespace

TEST(Layers, EveryEquivariantKindIsExactlyEquivariant) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const auto lift = EquivariantLayer::c4_lifting(2, 3, 6, 3, rng);
    const auto group = EquivariantLayer::c4_group(2, 2, 5, 3, rng);
    const auto sets = EquivariantLayer::deepsets(4, 3, 2, rng);
    EXPECT_LE(max_layer_equivariance_error(lift, randn(lift.input_rep().shape, rng)), 1e-10);
    EXPECT_LE(max_layer_equivariance_error(group, randn(group.input_rep().shape, rng)), 1e-10);
    EXPECT_LE(max_layer_equivariance_error(sets, randn(sets.input_rep().shape, rng)), 1e-10);
  }
}

TEST(Layers, ProjectedModelIsEquivariantAndInputUntouched) {
  ModelSpec spec;
  spec.image_size = 6;
  spec.seed = 4;
  auto model = build_model(spec);
  const auto before = model.gamma_values();
  const auto projected = project_equivariant(model);
  EXPECT_EQ(model.gamma_values(), before);
  for (double g : projected.gamma_values()) EXPECT_EQ(g, 0.0);
  std::mt19937_64 rng(1);
  const Tensor x = randn(model.input_rep().shape, rng);
  EXPECT_LE(exact_equivariance_error(projected, x), 1e-10);
  EXPECT_GT(exact_equivariance_error(model, x), 1e-6);
}

TEST(Layers, DeepsetsForwardMatchesDefinition) {
  const Tensor A({2, 1}, {1, 2}), B({2, 1}, {3, -1});
  EquivariantLayer layer(EquivariantKind::deepsets_linear, Representation::set(2, 2), Representation::set(2, 1), {A, B});
  const Tensor z({2, 2}, {1, 0, 0, 1});
  // mean row = (0.5, 0.5); mean @ B = 1; rows: (1*1+0*2)+1 = 2, (0+2)+1 = 3.
  const Tensor y = layer.forward(z);
  EXPECT_DOUBLE_EQ(y.at(0), 2.0);
  EXPECT_DOUBLE_EQ(y.at(1), 3.0);
}

TEST(Layers, DenseBranchIsRowVectorProduct) {
  NonEquivariantLayer neq(NonEquivariantKind::dense, {2}, {2}, {Tensor({2, 2}, {1, 2, 3, 4})});
  const Tensor y = neq.forward(Tensor::vector({1, 1}));
  EXPECT_DOUBLE_EQ(y.at(0), 4.0);
  EXPECT_DOUBLE_EQ(y.at(1), 6.0);
}

TEST(Layers, LipschitzBoundsAreSound) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const auto lift = EquivariantLayer::c4_lifting(1, 2, 5, 3, rng);
    const auto group = EquivariantLayer::c4_group(2, 1, 4, 3, rng);
    const auto sets = EquivariantLayer::deepsets(3, 2, 2, rng);
    for (const auto* layer : {&lift, &group, &sets}) {
      const double exact = unrolled_spectral_norm(*layer);
      EXPECT_LE(exact, lipschitz_bound(*layer, ConvBound::frobenius) * (1 + 1e-12));
      EXPECT_NEAR(lipschitz_bound(*layer, ConvBound::unrolled_exact), exact, 1e-9 * exact);
      // Random probes never exceed the exact operator norm.
      for (int p = 0; p < 5; ++p) {
        const Tensor a = randn(layer->input_rep().shape, rng), b = randn(layer->input_rep().shape, rng);
        EXPECT_LE(dist(layer->forward(a), layer->forward(b)), exact * dist(a, b) * (1 + 1e-12));
      }
    }
    // The deepsets constant is exact.
    EXPECT_NEAR(lipschitz_bound(sets), unrolled_spectral_norm(sets), 1e-9);
  }
}

TEST(Layers, NeqBoundsAreSound) {
  std::mt19937_64 rng(3);
  const auto dense = NonEquivariantLayer::dense({3, 2}, {3, 2}, rng);
  const auto mlp = NonEquivariantLayer::mlp({3, 2}, {2, 2}, 7, rng);
  for (const auto* layer : {&dense, &mlp}) {
    const double B = operator_bound(*layer);
    for (int p = 0; p < 20; ++p) {
      const Tensor x = randn(layer->input_shape(), rng), y = randn(layer->input_shape(), rng);
      EXPECT_LE(norm2(layer->forward(x).values()), B * norm2(x.values()));
      EXPECT_LE(dist(layer->forward(x), layer->forward(y)), lipschitz_bound(*layer) * dist(x, y));
    }
  }
  const auto& W = dense.matrices()[0].tensor();
  EXPECT_NEAR(lipschitz_bound(dense), eigen_sigma_max(W.values(), W.shape()[0], W.shape()[1]), 1e-8);
}

TEST(Layers, SpectralNormalizationCertificate) {
  std::mt19937_64 rng(12);
  auto dense = NonEquivariantLayer::dense({4, 3}, {4, 3}, rng, 3.0);
  auto mlp = NonEquivariantLayer::mlp({4, 3}, {4, 3}, 9, rng, 2.0);
  for (auto* layer : {&dense, &mlp}) {
    layer->spectral_normalize(50);
    for (const auto& m : layer->matrices()) {
      const auto& t = m.tensor();
      const double exact = eigen_sigma_max(t.values(), t.shape()[0], t.shape()[1]);
      EXPECT_GE(exact, 0.99);
      EXPECT_LE(exact, 1.001);
      EXPECT_NEAR(singular_values(t.values(), t.shape()[0], t.shape()[1]).front(), exact, 1e-9);
    }
    for (double s : layer->power_iteration_estimates(50)) {
      EXPECT_GE(s, 0.99);
      EXPECT_LE(s, 1.001);
    }
  }
}

TEST(Layers, CertifiedSpectralNormUpperBoundsExact) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor w = randn({5, 3}, rng);
    const double exact = eigen_sigma_max(w.values(), 5, 3);
    EXPECT_GE(certified_spectral_norm(w.values(), 5, 3), exact);
    EXPECT_NEAR(spectral_norm(w.values(), 5, 3), exact, 1e-9 * exact);
  }
}

TEST(Layers, ShapeErrorsAreStructured) {
  std::mt19937_64 rng(1);
  const auto lift = EquivariantLayer::c4_lifting(1, 2, 5, 3, rng);
  EXPECT_THROW(lift.forward(Tensor::zeros({2, 5, 5})), ShapeError);
  EXPECT_THROW(EquivariantLayer::c4_lifting(1, 2, 5, 2, rng), std::invalid_argument);
}

TEST(Layers, ModelJsonRoundTripIsBitExact) {
  ModelSpec spec;
  spec.family = ModelSpec::Family::deepsets;
  spec.layers = 3;
  spec.neq = NonEquivariantKind::mlp;
  spec.seed = 77;
  const auto model = build_model(spec);
  const auto path = std::filesystem::temp_directory_path() / "ace_model_roundtrip.json";
  save_model(model, path);
  const auto back = load_model(path);
  EXPECT_EQ(model_to_json(back).dump(), model_to_json(model).dump());
  std::mt19937_64 rng(2);
  const Tensor x = randn(model.input_rep().shape, rng);
  const Tensor a = model.forward(x), b = back.forward(x);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a.at(i), b.at(i));
  std::filesystem::remove(path);
}

TEST(Layers, HexFormattingRoundTrips) {
  for (double v : {0.0, -0.0, 1.0 / 3.0, 1e-300, -2.5e17, 6.02214076e23})
    EXPECT_EQ(std::bit_cast<std::uint64_t>(parse_hex(format_hex(v))), std::bit_cast<std::uint64_t>(v));
  EXPECT_EQ(std::stod(format_decimal(0.1)), 0.1);
}
