#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "ace/experiment.hpp"
#include "ace/metrics.hpp"

using namespace ace;

namespace {

Tensor randn(Shape shape, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = n(rng);
  return Tensor(std::move(shape), std::move(v));
}

HomotopicModel deepsets_model(std::uint64_t seed, std::size_t layers, double gamma) {
  ModelSpec spec;
  spec.family = ModelSpec::Family::deepsets;
  spec.layers = layers;
  spec.n_points = 3;
  spec.in_dim = 2;
  spec.out_dim = 2;
  spec.hidden_dim = 4;
  spec.seed = seed;
  spec.gamma_init = gamma;
  return build_model(spec);
}

// Rows of an n x d tensor reordered by perm, written without the groups module.
Tensor permute_rows(const Tensor& z, const std::vector<std::size_t>& perm) {
  const std::size_t n = z.shape()[0], d = z.shape()[1];
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = z.at(perm[i] * d + j);
  return Tensor(z.shape(), out);
}

}  // namespace

TEST(Metrics, AnchorValues) {
  const std::vector<double> g{0.1, 0.2};
  EXPECT_NEAR(thm1_refined_value(g, 1, 1, 1), 0.32, 1e-12);
  EXPECT_NEAR(thm1_coarse_value(g, 1, 1, 1), 0.44, 1e-12);
  EXPECT_NEAR(thm2_refined_value(g, 1, 1, 1), 0.68, 1e-12);
  EXPECT_NEAR(thm2_coarse_value(g, 1, 1, 1), 0.96, 1e-12);
}

TEST(Metrics, ClosedFormsAgainstHandExpansion) {
  // L = 3, M = 2, B = 0.5, |x| = 3, gamma = (0.1, -0.3, 0.2).
  const std::vector<double> g{0.1, -0.3, 0.2};
  const double M = 2, B = 0.5, x = 3;
  const double gbar = 0.3;
  EXPECT_NEAR(thm1_coarse_value(g, M, B, x), (1 + 1.3 + 1.3 * 1.3) * gbar * B * M * M * x, 1e-12);
  const double refined1 = (0.1 + 0.3 * (1 + 0.1) + 0.2 * std::pow(1 + 0.4 / 2, 2)) * B * M * M * x;
  EXPECT_NEAR(thm1_refined_value(g, M, B, x), refined1, 1e-12);
  const double C = 2;
  EXPECT_NEAR(thm2_coarse_value(g, M, B, x), 2 * gbar * std::pow(M + C * gbar, 2) * 3 * B * B * x, 1e-12);
  const double refined2 =
      2 * B * B * x *
      (0.1 * std::pow(M + M / 2 * 0.5, 2) + 0.3 * std::pow(M + M / 2 * 0.3, 2) + 0.2 * std::pow(M + M / 2 * 0.4, 2));
  EXPECT_NEAR(thm2_refined_value(g, M, B, x), refined2, 1e-12);
  EXPECT_NEAR(thm2_refined_value(std::vector<double>{0.4}, M, B, x), 2 * B * B * 0.4 * x, 1e-15);
  EXPECT_THROW(thm1_coarse_value(std::vector<double>{}, 1, 1, 1), std::invalid_argument);
}

TEST(Metrics, RecursionsByHand) {
  const std::vector<double> g{0.5, -0.25}, M{2, 3}, B{1, 0.5}, z{1, 4};
  // delta_1 = 0.5, delta_2 = 3*0.5 + 0.25*0.5*4 = 2
  EXPECT_NEAR(delta_recursion_value(g, M, B, z), 2.0, 1e-15);
  // eps_1 = 2*0.5*1*1 = 1, eps_2 = (3 + 0.125)*1 + 2*0.125*4 = 4.125
  EXPECT_NEAR(epsilon_recursion_value(g, M, B, 1.0, z), 4.125, 1e-15);
}

TEST(Metrics, ExactErrorMatchesIndependentEnumeration) {
  std::mt19937_64 rng(3);
  const auto model = deepsets_model(5, 2, 0.7);
  const Tensor x = randn({3, 2}, rng);
  const Tensor fx = model.forward(x);
  std::vector<std::size_t> perm{0, 1, 2};
  double worst = 0, total = 0;
  int count = 0;
  do {
    const double e = norm2((model.forward(permute_rows(x, perm)) - permute_rows(fx, perm)).values());
    worst = std::max(worst, e);
    total += e;
    ++count;
  } while (std::next_permutation(perm.begin(), perm.end()));
  const auto report = equivariance_error(model, x, Group::symmetric(3));
  EXPECT_NEAR(report.exact_error, worst, 1e-12);
  EXPECT_NEAR(report.mean_error, total / count, 1e-12);
  EXPECT_GT(worst, 1e-6);
}

TEST(Metrics, MonteCarloEstimator) {
  std::mt19937_64 rng(4);
  const auto model = deepsets_model(6, 2, 0.5);
  const Tensor x = randn({3, 2}, rng);
  const auto exact = equivariance_error(model, x, Group::symmetric(3));
  EquivarianceOptions mc;
  mc.mode = EquivarianceOptions::Mode::monte_carlo;
  mc.n_samples = 6;
  mc.without_replacement = true;
  EXPECT_NEAR(equivariance_error(model, x, Group::symmetric(3), mc).mc_error, exact.mean_error, 1e-12);
  mc.without_replacement = false;
  mc.n_samples = 5;
  double avg = 0;
  for (std::uint64_t s = 0; s < 400; ++s) {
    mc.seed = s;
    const auto r = equivariance_error(model, x, Group::symmetric(3), mc);
    EXPECT_LE(r.mc_error, exact.exact_error + 1e-12);
    avg += r.mc_error / 400;
  }
  EXPECT_NEAR(avg, exact.mean_error, 0.1 * exact.mean_error);
  EXPECT_THROW(equivariance_error(model, x, Group::symmetric(12)), std::invalid_argument);
}

TEST(Metrics, ZeroGammaGivesZeroEverywhere) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = sample_bounds(seed, seed, "mixed", 4, 0.0);
    for (double v : {s.approx_measured, s.delta_recursion, s.thm1_refined, s.thm1_coarse, s.equiv_measured,
                     s.epsilon_recursion, s.thm2_refined, s.thm2_coarse})
      EXPECT_LE(v, 1e-10);
  }
}

TEST(Metrics, OrderingHoldsOnRandomModels) {
  for (std::uint64_t seed = 100; seed < 160; ++seed) {
    const auto s = sample_bounds(seed, seed, "mixed", 4, 1.0);
    EXPECT_TRUE(s.violation.empty()) << "seed " << seed << ": " << s.violation;
  }
}

TEST(Metrics, SingleLinearLayerWithScalingBranchIsTight) {
  std::mt19937_64 rng(9);
  const std::size_t n = 3, d = 2;
  const auto rep = Representation::set(n, d);
  EquivariantLayer eq(EquivariantKind::deepsets_linear, rep, rep, {randn({d, d}, rng), randn({d, d}, rng)});
  const double c = 1.7;
  std::vector<double> W(n * d * n * d, 0.0);
  for (std::size_t i = 0; i < n * d; ++i) W[i * n * d + i] = c;
  NonEquivariantLayer neq(NonEquivariantKind::dense, {n, d}, {n, d}, {Tensor({n * d, n * d}, W)});
  std::vector<HomotopicLayer> layers;
  layers.push_back(HomotopicLayer{eq, neq, Parameter(Tensor::scalar(-0.35))});
  const HomotopicModel model(std::move(layers));
  for (int t = 0; t < 5; ++t) {
    const Tensor x = randn({n, d}, rng);
    const auto rec = recursion_bounds(model, x);
    EXPECT_NEAR(approximation_error(model, x), rec.delta.value, 1e-9);
    EXPECT_NEAR(rec.delta.value, 0.35 * c * norm2(x.values()), 1e-9);
  }
}

TEST(Metrics, CertificateCarriesConstants) {
  const auto model = deepsets_model(1, 3, 0.4);
  const auto constants = certify(model);
  EXPECT_EQ(constants.depth(), 3u);
  const auto t1 = thm1_bounds(model, 2.0, constants);
  EXPECT_EQ(t1.refined.L, 3u);
  EXPECT_DOUBLE_EQ(t1.refined.gamma_bar, 0.4);
  EXPECT_DOUBLE_EQ(t1.refined.M, constants.M());
  EXPECT_DOUBLE_EQ(t1.refined.B, constants.B());
  EXPECT_LE(t1.refined.value, t1.coarse.value);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_LE(constants.neq_bound[i], constants.M() + 1e-15);
}

TEST(Metrics, ReadoutFactorScalesCertificates) {
  ModelSpec spec;
  spec.image_size = 4;
  spec.hidden_channels = 2;
  spec.seed = 2;
  spec.gamma_init = 0.3;
  const auto model = build_model(spec);
  const auto constants = certify(model);
  EXPECT_DOUBLE_EQ(constants.readout_bound, 0.5);
  const auto t1 = thm1_bounds(model, 1.0, constants);
  EXPECT_NEAR(t1.refined.value, 0.5 * thm1_refined_value(model.gamma_values(), constants.M(), constants.B(), 1.0),
              1e-12);
}
