#include "ace/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "ace/constraints.hpp"
#include "ace/groups.hpp"
#include "ace/layers.hpp"

namespace ace {
namespace {

/// Gaussian entries pushed away from zero so ReLU and |.| kinks stay out of reach of h.
Tensor random_leaf(Shape shape, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(numel(shape));
  for (auto& x : v) {
    const double z = normal(rng);
    x = std::copysign(0.2 + std::abs(z), z);
  }
  return Tensor(std::move(shape), std::move(v), true);
}

}  // namespace

double gradcheck(const std::function<Tensor()>& loss, std::vector<Tensor> params, double h) {
  if (params.empty()) return 0.0;
  for (auto& p : params) p.zero_grad();
  loss().backward();
  std::vector<double> analytic, numeric;
  for (auto& p : params) {
    if (p.has_grad()) {
      analytic.insert(analytic.end(), p.grad().begin(), p.grad().end());
    } else {
      analytic.insert(analytic.end(), p.numel(), 0.0);
    }
  }
  NoGradGuard no_grad;
  for (auto& p : params) {
    auto v = p.mutable_values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double saved = v[i];
      v[i] = saved + h;
      const double plus = loss().item();
      v[i] = saved - h;
      const double minus = loss().item();
      v[i] = saved;
      numeric.push_back((plus - minus) / (2.0 * h));
    }
  }
  double diff = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
  const double scale = std::max({norm2(analytic), norm2(numeric), 1e-300});
  return std::sqrt(diff) / scale;
}

double GradcheckReport::worst() const {
  double w = 0.0;
  for (const auto& c : cases) w = std::max(w, std::isfinite(c.rel_error) ? c.rel_error : INFINITY);
  return w;
}

Tensor corrupted_square(const Tensor& a) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (auto& x : out) x *= x;
  std::vector<double> saved(a.values().begin(), a.values().end());
  return Tensor::make_result(
      a.shape(), std::move(out), {a},
      [saved](std::span<const double> g, std::span<std::vector<double>* const> parents) {
        if (!parents[0]) return;
        for (std::size_t i = 0; i < g.size(); ++i) (*parents[0])[i] += 3.0 * saved[i] * g[i];
      },
      "corrupted_square");
}

GradcheckReport run_gradcheck_suite(std::uint64_t seed, const GradcheckSizes& s, bool corrupt_fixture) {
  std::mt19937_64 rng(seed);
  GradcheckReport report;
  auto check = [&](const std::string& name, std::vector<Tensor> params, const std::function<Tensor()>& loss) {
    std::size_t n = 0;
    for (const auto& p : params) n += p.numel();
    report.cases.push_back({name, n, gradcheck(loss, std::move(params))});
  };

  const std::size_t m = s.matrix;
  {
    Tensor a = random_leaf({m, m}, rng), b = random_leaf({m, m}, rng), c = random_leaf({}, rng);
    Tensor w = random_leaf({m, m}, rng).detach();
    check("add", {a, b}, [&] { return sum(add(a, b) * w); });
    check("sub", {a, b}, [&] { return sum(sub(a, b) * w); });
    check("mul", {a, b}, [&] { return sum(mul(a, b) * w); });
    check("mul_scalar_broadcast", {a, c}, [&] { return sum(mul(c, a) * w); });
    check("add_scalar_broadcast", {a, c}, [&] { return sum(add(a, c) * w); });
    check("relu", {a}, [&] { return sum(relu(a) * w); });
    check("abs", {a}, [&] { return sum(abs(a) * w); });
    check("square", {a}, [&] { return sum(square(a) * w); });
    check("scale", {a}, [&] { return sum(scale(a, -1.7) * w); });
    check("matmul", {a, b}, [&] { return sum(matmul(a, b)); });
    Tensor r = random_leaf({m, m + 1}, rng);
    Tensor wr = random_leaf({m, m + 1}, rng).detach();
    check("matmul_rect", {a, r}, [&] { return sum(matmul(a, r) * wr); });
  }
  {
    Tensor x = random_leaf({2, 3, 4}, rng);
    Tensor w0 = random_leaf({3, 4}, rng).detach(), w2 = random_leaf({2, 3}, rng).detach();
    check("sum_all", {x}, [&] { return scale(sum(x), 0.5); });
    check("mean_all", {x}, [&] { return mean(x); });
    check("l2_norm_all", {x}, [&] { return l2_norm(x); });
    check("sum_axis0", {x}, [&] { return sum(sum(x, {0}) * w0); });
    check("mean_axis2", {x}, [&] { return sum(mean(x, {2}) * w2); });
    check("l2_norm_axis2", {x}, [&] { return sum(l2_norm(x, {2}) * w2); });
    Tensor wr = random_leaf({4, 6}, rng).detach();
    check("reshape", {x}, [&] { return sum(reshape(x, {4, 6}) * wr); });
  }
  {
    const std::size_t H = s.image, C = s.channels;
    Tensor img = random_leaf({C, H, H}, rng);
    Tensor k3 = random_leaf({C + 1, C, 3, 3}, rng);
    auto wproj = random_leaf({C + 1, H, H}, rng).detach();
    check("conv2d", {img, k3}, [&] { return sum(conv2d(img, k3) * wproj); });
    const auto g = GroupElement{GroupKind::cyclic4, 1, {}};
    const auto rep = Representation::image(C, H, H);
    auto wimg = random_leaf({C, H, H}, rng).detach();
    check("gather_rotation", {img}, [&] { return sum(apply(g, rep, img) * wimg); });
    Tensor other = random_leaf({C, H, H}, rng);
    auto wst = random_leaf({2, C, H, H}, rng).detach();
    check("stack", {img, other}, [&] {
      std::vector<Tensor> parts{img, other};
      return sum(stack(parts) * wst);
    });

    auto lift = EquivariantLayer::c4_lifting(C, 2, H, 3, rng);
    Tensor x = random_leaf({C, H, H}, rng);
    auto wl = random_leaf({4, 2, H, H}, rng).detach();
    check("c4_lifting_conv", {x, lift.weights()[0].tensor()}, [&] { return sum(lift.forward(x) * wl); });
    auto group = EquivariantLayer::c4_group(2, 2, H, 3, rng);
    Tensor xr = random_leaf({4, 2, H, H}, rng);
    check("c4_group_conv", {xr, group.weights()[0].tensor()}, [&] { return sum(group.forward(xr) * wl); });
  }
  {
    const std::size_t n = s.set_points, d = s.set_dim;
    auto ds = EquivariantLayer::deepsets(n, d, d + 1, rng);
    Tensor z = random_leaf({n, d}, rng);
    auto w = random_leaf({n, d + 1}, rng).detach();
    check("deepsets_linear", {z, ds.weights()[0].tensor(), ds.weights()[1].tensor()},
          [&] { return sum(ds.forward(z) * w); });
    auto mlp = NonEquivariantLayer::mlp({n, d}, {n, d + 1}, 5, rng);
    check("neq_mlp", {z, mlp.matrices()[0].tensor(), mlp.matrices()[1].tensor()},
          [&] { return sum(mlp.forward(z) * w); });
  }

  // Two-layer homotopic models and both Lagrangians on top of them.
  ModelSpec spec;
  spec.family = ModelSpec::Family::c4;
  spec.image_size = std::max<std::size_t>(4, s.image - 1);
  spec.hidden_channels = s.channels;
  spec.seed = seed + 1;
  spec.gamma_init = 0.7;
  auto c4 = build_model(spec);
  c4.layers()[1].gamma.tensor().mutable_values()[0] = -0.4;
  Tensor c4_x = random_leaf(c4.input_rep().shape, rng).detach();
  Tensor c4_y = random_leaf(c4.output_rep().shape, rng).detach();
  auto c4_params = [&c4] {
    auto p = c4.equivariant_parameters();
    for (auto& t : c4.non_equivariant_parameters()) p.push_back(t);
    for (auto& t : c4.gammas()) p.push_back(t);
    return p;
  };
  auto c4_j0 = [&] { return sum(square(c4.forward(c4_x) - c4_y)); };
  check("homotopic_model_c4", c4_params(), c4_j0);

  ModelSpec ds_spec;
  ds_spec.family = ModelSpec::Family::deepsets;
  ds_spec.layers = 3;
  ds_spec.n_points = s.set_points;
  ds_spec.in_dim = s.set_dim;
  ds_spec.out_dim = s.set_dim;
  ds_spec.hidden_dim = 4;
  ds_spec.neq = NonEquivariantKind::mlp;
  ds_spec.neq_hidden = 6;
  ds_spec.seed = seed + 2;
  ds_spec.gamma_init = 0.5;
  auto sets = build_model(ds_spec);
  Tensor set_x = random_leaf(sets.input_rep().shape, rng).detach();
  Tensor set_y = random_leaf(sets.output_rep().shape, rng).detach();
  auto set_params = [&sets] {
    auto p = sets.equivariant_parameters();
    for (auto& t : sets.non_equivariant_parameters()) p.push_back(t);
    for (auto& t : sets.gammas()) p.push_back(t);
    return p;
  };
  check("homotopic_model_deepsets", set_params(), [&] { return sum(square(sets.forward(set_x) - set_y)); });

  DualState strict = DualState::strict(c4.depth());
  strict.lambda = {0.8, -1.3};
  check("lagrangian_strict", c4_params(), [&] {
    std::vector<Tensor> g = c4.gammas();
    return lagrangian_strict(c4_j0(), stack(g), strict);
  });

  const std::vector<double> lambda{0.6, 1.1};
  Tensor slack = Tensor::vector({0.3, 0.9}, true);
  auto resilient_params = c4_params();
  resilient_params.push_back(slack);
  check("lagrangian_resilient", resilient_params, [&] {
    std::vector<Tensor> g = c4.gammas();
    return lagrangian_resilient(c4_j0(), stack(g), slack, lambda, 1.0);
  });

  if (corrupt_fixture) {
    Tensor a = random_leaf({m, m}, rng);
    check("corrupted_fixture", {a}, [&] { return sum(corrupted_square(a)); });
  }
  return report;
}

}  // namespace ace
