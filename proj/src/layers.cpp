#include "ace/layers.hpp"

#include <cmath>
#include <stdexcept>

#include "ace/linalg.hpp"

namespace ace {
namespace {

Tensor random_normal(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> values(numel(shape));
  for (auto& v : values) v = dist(rng);
  return Tensor(std::move(shape), std::move(values), true);
}

void require_finite(const Tensor& t, const char* what) {
  for (double v : t.values())
    if (!std::isfinite(v)) throw std::domain_error(std::string(what) + ": non-finite weights");
}

std::vector<double> normalized(std::vector<double> v) {
  const double n = norm2(v);
  if (n > 0.0)
    for (auto& x : v) x /= n;
  return v;
}

constexpr int kMaxPowerSweeps = 1000;
constexpr double kPowerTolerance = 1e-10;

// One power-iteration sweep on row-major W (rows x cols); returns ||W v||.
double power_sweep(std::span<const double> w, std::size_t rows, std::size_t cols, std::vector<double>& u) {
  std::vector<double> v(cols, 0.0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) v[j] += w[i * cols + j] * u[i];
  v = normalized(std::move(v));
  std::vector<double> wu(rows, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += w[i * cols + j] * v[j];
    wu[i] = acc;
  }
  const double sigma = norm2(wu);
  if (sigma > 0.0) u = normalized(std::move(wu));
  return sigma;
}

std::vector<double> initial_power_vector(std::size_t rows, std::size_t cols) {
  std::mt19937_64 rng(0x5eedULL + rows * 1315423911ULL + cols);
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> u(rows);
  for (auto& x : u) x = dist(rng);
  return normalized(std::move(u));
}

template <typename Kind>
Kind parse_kind(const std::string& name, std::initializer_list<std::pair<const char*, Kind>> table, const char* what) {
  for (const auto& [key, kind] : table)
    if (name == key) return kind;
  throw std::invalid_argument(std::string("unknown ") + what + " '" + name + "'");
}

}  // namespace

std::string to_string(EquivariantKind kind) {
  switch (kind) {
    case EquivariantKind::c4_lifting_conv: return "c4_lifting_conv";
    case EquivariantKind::c4_group_conv: return "c4_group_conv";
    case EquivariantKind::deepsets_linear: return "deepsets_linear";
  }
  return "?";
}

EquivariantKind equivariant_kind_from_string(const std::string& name) {
  return parse_kind<EquivariantKind>(name,
                                     {{"c4_lifting_conv", EquivariantKind::c4_lifting_conv},
                                      {"c4_group_conv", EquivariantKind::c4_group_conv},
                                      {"deepsets_linear", EquivariantKind::deepsets_linear}},
                                     "equivariant layer kind");
}

std::string to_string(NonEquivariantKind kind) { return kind == NonEquivariantKind::dense ? "dense" : "mlp"; }

NonEquivariantKind non_equivariant_kind_from_string(const std::string& name) {
  return parse_kind<NonEquivariantKind>(name, {{"dense", NonEquivariantKind::dense}, {"mlp", NonEquivariantKind::mlp}},
                                        "non-equivariant layer kind");
}

std::string to_string(Readout readout) { return readout == Readout::none ? "none" : "group_mean"; }

Readout readout_from_string(const std::string& name) {
  return parse_kind<Readout>(name, {{"none", Readout::none}, {"group_mean", Readout::group_mean}}, "readout");
}

// ---------------------------------------------------------------------------
// EquivariantLayer

EquivariantLayer::EquivariantLayer(EquivariantKind kind, Representation input, Representation output,
                                   std::vector<Tensor> weights)
    : kind_(kind), input_(std::move(input)), output_(std::move(output)) {
  for (auto& w : weights) weights_.emplace_back(std::move(w));
  validate();
}

void EquivariantLayer::validate() const {
  auto fail = [&](const std::string& why) {
    throw ShapeError(to_string(kind_) + ": " + why + " (input " + input_.to_string() + ", output " +
                     output_.to_string() + ")");
  };
  switch (kind_) {
    case EquivariantKind::c4_lifting_conv: {
      if (input_.kind != SpaceKind::image || output_.kind != SpaceKind::regular) fail("expects image -> regular");
      if (weights_.size() != 1) fail("expects one kernel tensor");
      const auto& w = weights_[0].tensor().shape();
      if (w.size() != 4 || w[1] != input_.shape[0] || w[0] != output_.shape[1] || w[2] != w[3] || w[2] % 2 == 0)
        fail("kernel shape " + ace::to_string(w) + " is not C' x C x k x k with odd k");
      if (input_.shape[1] != output_.shape[2] || input_.shape[2] != output_.shape[3]) fail("spatial size changes");
      break;
    }
    case EquivariantKind::c4_group_conv: {
      if (input_.kind != SpaceKind::regular || output_.kind != SpaceKind::regular) fail("expects regular -> regular");
      if (weights_.size() != 1) fail("expects one kernel tensor");
      const auto& w = weights_[0].tensor().shape();
      if (w.size() != 5 || w[1] != 4 || w[2] != input_.shape[1] || w[0] != output_.shape[1] || w[3] != w[4] ||
          w[3] % 2 == 0)
        fail("kernel shape " + ace::to_string(w) + " is not C' x 4 x C x k x k with odd k");
      if (input_.shape[2] != output_.shape[2] || input_.shape[3] != output_.shape[3]) fail("spatial size changes");
      break;
    }
    case EquivariantKind::deepsets_linear: {
      if (input_.kind != SpaceKind::set || output_.kind != SpaceKind::set) fail("expects set -> set");
      if (input_.shape[0] != output_.shape[0]) fail("point count changes");
      if (weights_.size() != 2) fail("expects weights A and B");
      const Shape expected{input_.shape[1], output_.shape[1]};
      for (const auto& w : weights_)
        if (w.tensor().shape() != expected) fail("weight shape " + ace::to_string(w.tensor().shape()));
      break;
    }
  }
}

EquivariantLayer EquivariantLayer::c4_lifting(std::size_t in_channels, std::size_t out_channels,
                                              std::size_t image_size, std::size_t kernel_size, std::mt19937_64& rng,
                                              double init_scale) {
  const double stddev = init_scale / std::sqrt(static_cast<double>(in_channels * kernel_size * kernel_size));
  return EquivariantLayer(EquivariantKind::c4_lifting_conv,
                          Representation::image(in_channels, image_size, image_size),
                          Representation::regular(out_channels, image_size, image_size),
                          {random_normal({out_channels, in_channels, kernel_size, kernel_size}, stddev, rng)});
}

EquivariantLayer EquivariantLayer::c4_group(std::size_t in_channels, std::size_t out_channels, std::size_t image_size,
                                            std::size_t kernel_size, std::mt19937_64& rng, double init_scale) {
  const double stddev = init_scale / std::sqrt(static_cast<double>(4 * in_channels * kernel_size * kernel_size));
  return EquivariantLayer(EquivariantKind::c4_group_conv,
                          Representation::regular(in_channels, image_size, image_size),
                          Representation::regular(out_channels, image_size, image_size),
                          {random_normal({out_channels, 4, in_channels, kernel_size, kernel_size}, stddev, rng)});
}

EquivariantLayer EquivariantLayer::deepsets(std::size_t n_points, std::size_t in_dim, std::size_t out_dim,
                                            std::mt19937_64& rng, double init_scale) {
  const double stddev = init_scale / std::sqrt(static_cast<double>(in_dim));
  auto a = random_normal({in_dim, out_dim}, stddev, rng);
  auto b = random_normal({in_dim, out_dim}, stddev, rng);
  return EquivariantLayer(EquivariantKind::deepsets_linear, Representation::set(n_points, in_dim),
                          Representation::set(n_points, out_dim), {std::move(a), std::move(b)});
}

Tensor EquivariantLayer::kernel_bank() const {
  const Tensor& w = weights_.at(0).tensor();
  const Shape& s = w.shape();
  if (kind_ == EquivariantKind::c4_lifting_conv) {
    const std::size_t O = s[0], C = s[1], k = s[2], kk = k * k;
    std::vector<std::size_t> src;
    src.reserve(4 * O * C * kk);
    for (int r = 0; r < 4; ++r)
      for (std::size_t o = 0; o < O; ++o)
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j) src.push_back((o * C + c) * kk + rotated_source(i, j, k, r));
    return gather(w, std::move(src), {4 * O, C, k, k});
  }
  if (kind_ == EquivariantKind::c4_group_conv) {
    const std::size_t O = s[0], C = s[2], k = s[3], kk = k * k;
    std::vector<std::size_t> src;
    src.reserve(16 * O * C * kk);
    for (int r = 0; r < 4; ++r)
      for (std::size_t o = 0; o < O; ++o)
        for (int t = 0; t < 4; ++t) {
          const auto shifted = static_cast<std::size_t>(((t - r) % 4 + 4) % 4);
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < k; ++i)
              for (std::size_t j = 0; j < k; ++j)
                src.push_back(((o * 4 + shifted) * C + c) * kk + rotated_source(i, j, k, r));
        }
    return gather(w, std::move(src), {4 * O, 4 * C, k, k});
  }
  throw std::logic_error("kernel_bank: deepsets_linear has no convolution kernels");
}

Tensor EquivariantLayer::forward(const Tensor& z) const {
  if (z.shape() != input_.shape) {
    throw ShapeError(to_string(kind_) + ": input " + ace::to_string(z.shape()) + " does not match " +
                     input_.to_string());
  }
  switch (kind_) {
    case EquivariantKind::c4_lifting_conv:
      return reshape(conv2d(z, kernel_bank()), output_.shape);
    case EquivariantKind::c4_group_conv: {
      const Shape& in = input_.shape;
      return reshape(conv2d(reshape(z, {in[0] * in[1], in[2], in[3]}), kernel_bank()), output_.shape);
    }
    case EquivariantKind::deepsets_linear: {
      const std::size_t n = input_.shape[0];
      Tensor averaging = Tensor::full({n, n}, 1.0 / static_cast<double>(n));
      return matmul(z, weights_[0].tensor()) + matmul(matmul(averaging, z), weights_[1].tensor());
    }
  }
  throw std::logic_error("unreachable");
}

// ---------------------------------------------------------------------------
// NonEquivariantLayer

NonEquivariantLayer::NonEquivariantLayer(NonEquivariantKind kind, Shape input_shape, Shape output_shape,
                                         std::vector<Tensor> matrices)
    : kind_(kind), input_shape_(std::move(input_shape)), output_shape_(std::move(output_shape)) {
  for (auto& m : matrices) matrices_.emplace_back(std::move(m));
  validate();
}

void NonEquivariantLayer::validate() const {
  const std::size_t expected = kind_ == NonEquivariantKind::dense ? 1 : 2;
  if (matrices_.size() != expected) throw ShapeError(to_string(kind_) + ": wrong number of weight matrices");
  std::size_t width = numel(input_shape_);
  for (const auto& m : matrices_) {
    const auto& s = m.tensor().shape();
    if (s.size() != 2 || s[0] != width)
      throw ShapeError(to_string(kind_) + ": matrix " + ace::to_string(s) + " does not chain from width " +
                       std::to_string(width));
    width = s[1];
  }
  if (width != numel(output_shape_))
    throw ShapeError(to_string(kind_) + ": final width " + std::to_string(width) + " does not fill " +
                     ace::to_string(output_shape_));
}

NonEquivariantLayer NonEquivariantLayer::dense(Shape input_shape, Shape output_shape, std::mt19937_64& rng,
                                               double init_scale) {
  const std::size_t n_in = numel(input_shape), n_out = numel(output_shape);
  auto w = random_normal({n_in, n_out}, init_scale / std::sqrt(static_cast<double>(n_in)), rng);
  return NonEquivariantLayer(NonEquivariantKind::dense, std::move(input_shape), std::move(output_shape), {w});
}

NonEquivariantLayer NonEquivariantLayer::mlp(Shape input_shape, Shape output_shape, std::size_t hidden,
                                             std::mt19937_64& rng, double init_scale) {
  const std::size_t n_in = numel(input_shape), n_out = numel(output_shape);
  auto w1 = random_normal({n_in, hidden}, init_scale / std::sqrt(static_cast<double>(n_in)), rng);
  auto w2 = random_normal({hidden, n_out}, init_scale / std::sqrt(static_cast<double>(hidden)), rng);
  return NonEquivariantLayer(NonEquivariantKind::mlp, std::move(input_shape), std::move(output_shape), {w1, w2});
}

Tensor NonEquivariantLayer::forward(const Tensor& z) const {
  if (z.shape() != input_shape_) {
    throw ShapeError(to_string(kind_) + ": input " + ace::to_string(z.shape()) + " does not match " +
                     ace::to_string(input_shape_));
  }
  Tensor h = matmul(reshape(z, {1, z.numel()}), matrices_[0].tensor());
  if (kind_ == NonEquivariantKind::mlp) h = matmul(relu(h), matrices_[1].tensor());
  return reshape(h, output_shape_);
}

std::vector<double> NonEquivariantLayer::spectral_normalize(int n_iters) {
  if (n_iters < 1) throw std::invalid_argument("spectral_normalize: n_iters must be >= 1");
  power_vectors_.resize(matrices_.size());
  std::vector<double> sigmas;
  for (std::size_t m = 0; m < matrices_.size(); ++m) {
    Tensor& w = matrices_[m].tensor();
    const std::size_t rows = w.shape()[0], cols = w.shape()[1];
    auto& u = power_vectors_[m];
    if (u.size() != rows) u = initial_power_vector(rows, cols);
    double sigma = 0.0;
    for (int it = 0; it < n_iters; ++it) sigma = power_sweep(w.values(), rows, cols, u);
    // Keep sweeping until the estimate settles; an unconverged estimate is below
    // sigma_max and would leave the normalized map with norm above 1.
    for (int it = n_iters; it < kMaxPowerSweeps; ++it) {
      const double prev = sigma;
      sigma = power_sweep(w.values(), rows, cols, u);
      if (std::abs(sigma - prev) <= kPowerTolerance * sigma) break;
    }
    if (sigma > 0.0)
      for (auto& x : w.mutable_values()) x /= sigma;
    sigmas.push_back(sigma);
  }
  return sigmas;
}

std::vector<double> NonEquivariantLayer::power_iteration_estimates(int n_iters) const {
  std::vector<double> sigmas;
  for (std::size_t m = 0; m < matrices_.size(); ++m) {
    const Tensor& w = matrices_[m].tensor();
    const std::size_t rows = w.shape()[0], cols = w.shape()[1];
    auto u = m < power_vectors_.size() && power_vectors_[m].size() == rows ? power_vectors_[m]
                                                                            : initial_power_vector(rows, cols);
    double sigma = 0.0;
    for (int it = 0; it < std::max(1, n_iters); ++it) sigma = power_sweep(w.values(), rows, cols, u);
    sigmas.push_back(sigma);
  }
  return sigmas;
}

// ---------------------------------------------------------------------------
// HomotopicLayer / HomotopicModel

Tensor HomotopicLayer::forward(const Tensor& z) const {
  Tensor out = eq.forward(z);
  const Tensor& g = gamma.tensor();
  // A zero gamma that is not being differentiated contributes exactly nothing.
  if (g.item() == 0.0 && !(grad_enabled() && g.requires_grad())) return out;
  return out + g * neq.forward(z);
}

HomotopicModel::HomotopicModel(std::vector<HomotopicLayer> layers, Readout readout)
    : layers_(std::move(layers)), readout_(readout) {
  validate();
}

void HomotopicModel::validate() const {
  if (layers_.empty()) throw std::invalid_argument("homotopic model: needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.neq.input_shape() != l.eq.input_rep().shape || l.neq.output_shape() != l.eq.output_rep().shape) {
      throw ShapeError("homotopic layer " + std::to_string(i + 1) + ": branch shapes disagree, eq " +
                       l.eq.input_rep().to_string() + " -> " + l.eq.output_rep().to_string() + ", neq " +
                       ace::to_string(l.neq.input_shape()) + " -> " + ace::to_string(l.neq.output_shape()));
    }
    if (!l.gamma.tensor().defined() || l.gamma.tensor().numel() != 1)
      throw ShapeError("homotopic layer " + std::to_string(i + 1) + ": gamma must be a scalar");
    if (i > 0 && !(layers_[i - 1].eq.output_rep() == l.eq.input_rep())) {
      throw ShapeError("homotopic layers " + std::to_string(i) + " and " + std::to_string(i + 1) +
                       " do not compose: " + layers_[i - 1].eq.output_rep().to_string() + " vs " +
                       l.eq.input_rep().to_string());
    }
  }
  if (readout_ == Readout::group_mean && layers_.back().eq.output_rep().kind != SpaceKind::regular)
    throw ShapeError("group_mean readout needs a regular-representation output");
}

ForwardTrace HomotopicModel::forward_trace(const Tensor& x) const {
  validate();
  if (x.shape() != input_rep().shape) {
    throw ShapeError("homotopic model: input " + ace::to_string(x.shape()) + " does not match " +
                     input_rep().to_string());
  }
  ForwardTrace trace;
  trace.z.reserve(layers_.size() + 1);
  trace.z.push_back(x);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Tensor a = layers_[i].forward(trace.z.back());
    if (i + 1 < layers_.size()) a = relu(a);
    trace.z.push_back(std::move(a));
  }
  trace.output = readout_ == Readout::group_mean ? mean(trace.z.back(), {0}) : trace.z.back();
  return trace;
}

Tensor HomotopicModel::forward(const Tensor& x) const { return forward_trace(x).output; }

const Representation& HomotopicModel::input_rep() const { return layers_.at(0).eq.input_rep(); }

Representation HomotopicModel::output_rep() const {
  const auto& last = layers_.back().eq.output_rep();
  if (readout_ == Readout::group_mean) return Representation::image(last.shape[1], last.shape[2], last.shape[3]);
  return last;
}

double HomotopicModel::readout_bound() const { return readout_ == Readout::group_mean ? 0.5 : 1.0; }

std::vector<double> HomotopicModel::gamma_values() const {
  std::vector<double> out;
  for (const auto& l : layers_) out.push_back(l.gamma_value());
  return out;
}

void HomotopicModel::set_gammas(double value) {
  for (auto& l : layers_) l.gamma.tensor().mutable_values()[0] = value;
}

std::vector<Tensor> HomotopicModel::gammas() const {
  std::vector<Tensor> out;
  for (const auto& l : layers_) out.push_back(l.gamma.tensor());
  return out;
}

std::vector<Tensor> HomotopicModel::equivariant_parameters() const {
  std::vector<Tensor> out;
  for (const auto& l : layers_)
    for (const auto& w : l.eq.weights()) out.push_back(w.tensor());
  return out;
}

std::vector<Tensor> HomotopicModel::non_equivariant_parameters() const {
  std::vector<Tensor> out;
  for (const auto& l : layers_)
    for (const auto& w : l.neq.matrices()) out.push_back(w.tensor());
  return out;
}

HomotopicModel project_equivariant(const HomotopicModel& model) {
  HomotopicModel projected = model;
  projected.set_gammas(0.0);
  return projected;
}

HomotopicModel build_model(const ModelSpec& spec) {
  if (spec.layers == 0) throw std::invalid_argument("build_model: layers must be >= 1");
  std::mt19937_64 rng(spec.seed);
  std::vector<HomotopicLayer> layers;
  auto make_neq = [&](const Shape& in, const Shape& out) {
    return spec.neq == NonEquivariantKind::dense ? NonEquivariantLayer::dense(in, out, rng, spec.neq_init_scale)
                                                 : NonEquivariantLayer::mlp(in, out, spec.neq_hidden, rng,
                                                                            spec.neq_init_scale);
  };
  for (std::size_t i = 0; i < spec.layers; ++i) {
    const bool last = i + 1 == spec.layers;
    EquivariantLayer eq;
    if (spec.family == ModelSpec::Family::c4) {
      const std::size_t out_c = last ? spec.out_channels : spec.hidden_channels;
      eq = i == 0 ? EquivariantLayer::c4_lifting(spec.in_channels, out_c, spec.image_size, spec.kernel_size, rng,
                                                 spec.init_scale)
                  : EquivariantLayer::c4_group(spec.hidden_channels, out_c, spec.image_size, spec.kernel_size, rng,
                                               spec.init_scale);
    } else {
      const std::size_t in_d = i == 0 ? spec.in_dim : spec.hidden_dim;
      const std::size_t out_d = last ? spec.out_dim : spec.hidden_dim;
      eq = EquivariantLayer::deepsets(spec.n_points, in_d, out_d, rng, spec.init_scale);
    }
    auto neq = make_neq(eq.input_rep().shape, eq.output_rep().shape);
    layers.push_back(HomotopicLayer{std::move(eq), std::move(neq), Parameter(Tensor::scalar(spec.gamma_init, true))});
  }
  return HomotopicModel(std::move(layers),
                        spec.family == ModelSpec::Family::c4 ? Readout::group_mean : Readout::none);
}

// ---------------------------------------------------------------------------
// Certified constants

double unrolled_spectral_norm(const EquivariantLayer& layer) {
  NoGradGuard no_grad;
  const std::size_t n_in = numel(layer.input_rep().shape);
  const std::size_t n_out = numel(layer.output_rep().shape);
  if (n_in * n_out > 16'000'000) throw std::invalid_argument("unrolled_spectral_norm: layer too large to unroll");
  std::vector<double> matrix(n_in * n_out);
  std::vector<double> basis(n_in, 0.0);
  for (std::size_t i = 0; i < n_in; ++i) {
    basis[i] = 1.0;
    Tensor col = layer.forward(Tensor(layer.input_rep().shape, basis));
    std::copy(col.values().begin(), col.values().end(), matrix.begin() + static_cast<std::ptrdiff_t>(i * n_out));
    basis[i] = 0.0;
  }
  return linalg::spectral_norm(matrix, n_in, n_out);
}

double lipschitz_bound(const EquivariantLayer& layer, ConvBound method) {
  for (const auto& w : layer.weights()) require_finite(w.tensor(), "lipschitz_bound");
  if (method == ConvBound::unrolled_exact)
    return unrolled_spectral_norm(layer) * (1.0 + linalg::kCertificateMargin);

  if (layer.kind() == EquivariantKind::deepsets_linear) {
    // Z -> Z A + J Z B splits into the zero-mean rows (norm sigma(A)) and the
    // constant-row part (norm sigma(A + B)).
    const Tensor& a = layer.weights()[0].tensor();
    const Tensor& b = layer.weights()[1].tensor();
    const std::size_t rows = a.shape()[0], cols = a.shape()[1];
    std::vector<double> sum(a.numel());
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = a.at(i) + b.at(i);
    double bound = linalg::certified_spectral_norm(sum, rows, cols);
    if (layer.input_rep().shape[0] > 1)
      bound = std::max(bound, linalg::certified_spectral_norm(a.values(), rows, cols));
    return bound;
  }

  NoGradGuard no_grad;
  Tensor bank = layer.kernel_bank();
  const std::size_t O = bank.shape()[0], C = bank.shape()[1], kk = bank.shape()[2] * bank.shape()[3];
  double total = 0.0;
  for (std::size_t tap = 0; tap < kk; ++tap) {
    double sq = 0.0;
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t c = 0; c < C; ++c) {
        const double w = bank.at((o * C + c) * kk + tap);
        sq += w * w;
      }
    total += std::sqrt(sq);
  }
  return total * (1.0 + linalg::kCertificateMargin);
}

double lipschitz_bound(const NonEquivariantLayer& layer) {
  double product = 1.0;
  for (const auto& m : layer.matrices()) {
    require_finite(m.tensor(), "lipschitz_bound");
    const auto& s = m.tensor().shape();
    product *= linalg::certified_spectral_norm(m.tensor().values(), s[0], s[1]);
  }
  return product;
}

double operator_bound(const NonEquivariantLayer& layer) { return lipschitz_bound(layer); }

}  // namespace ace
