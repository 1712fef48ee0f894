#include "ace/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "ace/serialization.hpp"

namespace ace {
namespace {

constexpr char kDatasetMagic[8] = {'A', 'C', 'E', 'D', 'A', 'T', 'A', '\0'};
constexpr std::uint32_t kDatasetVersion = 1;

/// a on rows [r0, r1) x cols [c0, c1), zero elsewhere.
std::vector<double> box(std::size_t H, std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1, double a) {
  std::vector<double> img(H * H, 0.0);
  for (std::size_t r = r0; r < r1; ++r)
    for (std::size_t c = c0; c < c1; ++c) img[r * H + c] = a;
  return img;
}

std::vector<double> centered(std::size_t H, std::size_t half_h, std::size_t half_w, double a) {
  const std::size_t m = H / 2;
  return box(H, m - half_h, m + half_h, m - half_w, m + half_w, a);
}

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void f64(double v) { bytes(&v, sizeof v); }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  void indices(const std::vector<std::size_t>& v) {
    u64(v.size());
    for (auto i : v) u64(i);
  }
  void tensor(const Tensor& t) {
    u64(t.shape().size());
    for (auto e : t.shape()) u64(e);
    for (double v : t.values()) f64(v);
  }

 private:
  std::ofstream& out_;
};

class Reader {
 public:
  explicit Reader(std::ifstream& in) : in_(in) {}
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in_) throw std::runtime_error("load_dataset: truncated container");
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, sizeof v);
    return v;
  }
  double f64() {
    double v;
    bytes(&v, sizeof v);
    return v;
  }
  std::string str() {
    std::string s(checked_count(u64()), '\0');
    bytes(s.data(), s.size());
    return s;
  }
  std::vector<std::size_t> indices() {
    std::vector<std::size_t> v(checked_count(u64()));
    for (auto& i : v) i = u64();
    return v;
  }
  Tensor tensor() {
    Shape shape(checked_count(u64()));
    for (auto& e : shape) e = checked_count(u64());
    std::vector<double> values(checked_count(numel(shape)));
    for (auto& v : values) v = f64();
    return Tensor(std::move(shape), std::move(values));
  }

 private:
  static std::size_t checked_count(std::uint64_t n) {
    if (n > (1ULL << 32)) throw std::runtime_error("load_dataset: corrupt length field");
    return static_cast<std::size_t>(n);
  }
  std::ifstream& in_;
};

}  // namespace

std::string to_string(SymmetryBreakSpec::Kind kind) {
  switch (kind) {
    case SymmetryBreakSpec::Kind::none: return "none";
    case SymmetryBreakSpec::Kind::subgroup_c2: return "subgroup_c2";
    case SymmetryBreakSpec::Kind::arbitrary: return "arbitrary";
  }
  return "?";
}

Splits split_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t n_val = n / 10, n_test = n / 10;
  if (n >= 3) {
    n_val = std::max<std::size_t>(n_val, 1);
    n_test = std::max<std::size_t>(n_test, 1);
  }
  const std::size_t n_train = n - n_val - n_test;
  Splits s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
               order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return s;
}

void Dataset::validate() const {
  if (inputs.size() != targets.size()) throw std::invalid_argument("dataset: input and target counts differ");
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].shape() != input_rep.shape || targets[i].shape() != target_rep.shape)
      throw ShapeError("dataset: sample " + std::to_string(i) + " has shapes " + to_string(inputs[i].shape()) + " / " +
                       to_string(targets[i].shape()));
    for (double v : inputs[i].values())
      if (!std::isfinite(v)) throw std::invalid_argument("dataset: non-finite input in sample " + std::to_string(i));
    for (double v : targets[i].values())
      if (!std::isfinite(v)) throw std::invalid_argument("dataset: non-finite target in sample " + std::to_string(i));
  }
  std::vector<int> seen(inputs.size(), 0);
  for (const auto* part : {&splits.train, &splits.val, &splits.test})
    for (auto i : *part) {
      if (i >= seen.size() || seen[i]++) throw std::invalid_argument("dataset: splits overlap or are out of range");
    }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end())
    throw std::invalid_argument("dataset: splits do not cover every sample");
}

std::string to_string(C4Target target) {
  switch (target) {
    case C4Target::square: return "square";
    case C4Target::rectangle: return "rectangle";
    case C4Target::nonsymmetric: return "nonsymmetric";
  }
  return "?";
}

C4Target c4_target_from_string(const std::string& name) {
  if (name == "square") return C4Target::square;
  if (name == "rectangle") return C4Target::rectangle;
  if (name == "nonsymmetric") return C4Target::nonsymmetric;
  throw std::invalid_argument("unknown c4 target '" + name + "' (square, rectangle, nonsymmetric)");
}

Dataset c4_toy(C4Target target, std::size_t n, std::size_t image_size, std::uint64_t seed, double noise) {
  const std::size_t H = image_size;
  if (H < 8 || H % 2 != 0) throw std::invalid_argument("c4_toy: image size must be even and at least 8, got " + std::to_string(H));
  Dataset ds;
  ds.recipe = "c4_toy/" + to_string(target) + "/H=" + std::to_string(H);
  ds.seed = seed;
  ds.symmetry.kind = target == C4Target::square      ? SymmetryBreakSpec::Kind::none
                     : target == C4Target::rectangle ? SymmetryBreakSpec::Kind::subgroup_c2
                                                     : SymmetryBreakSpec::Kind::arbitrary;
  ds.symmetry.epsilon = target == C4Target::square ? 0.0 : 1.0;
  ds.input_rep = Representation::image(1, H, H);
  ds.target_rep = ds.input_rep;

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> size_dist(1, H / 4);
  std::uniform_real_distribution<double> amp_dist(0.5, 1.0);
  if (!(noise >= 0.0)) throw std::invalid_argument("c4_toy: noise must be non-negative");
  // Separate stream so noise = 0 reproduces the clean dataset exactly.
  std::mt19937_64 noise_rng(seed ^ 0x0a15eULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t h = size_dist(rng);
    const double a = amp_dist(rng);
    ds.inputs.emplace_back(ds.input_rep.shape, centered(H, h, h, a));
    std::vector<double> y;
    switch (target) {
      case C4Target::square: y = centered(H, h + 1, h + 1, a); break;
      case C4Target::rectangle: y = centered(H, h, h + 2, a); break;
      case C4Target::nonsymmetric: {
        y = centered(H, h + 1, h + 1, a);
        for (std::size_t r = 0; r < H / 2; ++r)
          for (std::size_t c = H / 2; c < H; ++c) y[r * H + c] = 0.0;
        break;
      }
    }
    if (noise > 0.0)
      for (auto& v : y) v += noise * normal(noise_rng);
    ds.targets.emplace_back(ds.target_rep.shape, std::move(y));
  }
  ds.splits = split_indices(n, seed ^ 0x5eedULL);
  ds.validate();
  return ds;
}

Tensor set_regression_symmetric(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("set_regression: expected n x d, got " + to_string(x.shape()));
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += x.at(i * d + j) / static_cast<double>(n);
  auto W = [](std::size_t r, std::size_t c) {
    if (r == c) return 1.0;
    if (c == r + 1) return 0.5;
    if (r == c + 1) return -0.5;
    return 0.0;
  };
  std::vector<double> y(n * d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) {
      double acc = 0.0;
      for (std::size_t r = 0; r < d; ++r) acc += x.at(i * d + r) * W(r, c);
      acc += mean[c] * (c % 2 == 0 ? 0.5 : -0.5);
      y[i * d + c] = acc;
    }
  return Tensor(x.shape(), std::move(y));
}

Tensor set_regression_break(const Tensor& x) {
  if (x.rank() != 2 || x.shape()[0] < 2) throw ShapeError("set_regression: expected n x d with n >= 2");
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  std::vector<double> y(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = (2.0 * static_cast<double>(i) - static_cast<double>(n - 1)) / static_cast<double>(n - 1);
    for (std::size_t j = 0; j < d; ++j) y[i * d + j] = w * x.at(i * d + j);
  }
  return Tensor(x.shape(), std::move(y));
}

Dataset set_regression(std::size_t n_points, std::size_t d, double epsilon, std::size_t n_samples,
                       std::uint64_t seed, double noise) {
  if (n_points < 2) throw std::invalid_argument("set_regression: n_points must be at least 2");
  if (d == 0) throw std::invalid_argument("set_regression: d must be positive");
  if (!(epsilon >= 0.0)) throw std::invalid_argument("set_regression: epsilon must be non-negative");
  if (!(noise >= 0.0)) throw std::invalid_argument("set_regression: noise must be non-negative");
  Dataset ds;
  ds.recipe = "set_regression/n=" + std::to_string(n_points) + "/d=" + std::to_string(d) + "/eps=" + format_decimal(epsilon);
  ds.seed = seed;
  ds.symmetry = {epsilon, epsilon > 0.0 ? SymmetryBreakSpec::Kind::arbitrary : SymmetryBreakSpec::Kind::none};
  ds.input_rep = Representation::set(n_points, d);
  ds.target_rep = ds.input_rep;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t s = 0; s < n_samples; ++s) {
    std::vector<double> xv(n_points * d);
    for (auto& v : xv) v = normal(rng);
    Tensor x(ds.input_rep.shape, std::move(xv));
    Tensor y = set_regression_symmetric(x);
    if (epsilon > 0.0) y = y + epsilon * set_regression_break(x);
    if (noise > 0.0) {
      std::vector<double> yv(y.values().begin(), y.values().end());
      for (auto& v : yv) v += noise * normal(rng);
      y = Tensor(ds.target_rep.shape, std::move(yv));
    }
    ds.inputs.push_back(std::move(x));
    ds.targets.push_back(y.detach());
  }
  ds.splits = split_indices(n_samples, seed ^ 0x5eedULL);
  ds.validate();
  return ds;
}

ScalarToy scalar_toy(ScalarToy::Kind kind, double a, double rho) {
  if (!std::isfinite(a)) throw std::invalid_argument("scalar_toy: a must be finite");
  ScalarToy toy;
  toy.kind = kind;
  toy.a = a;
  toy.rho = rho;
  if (kind == ScalarToy::Kind::strict_kkt) {
    toy.gamma_star = 0.0;
    toy.lambda_star = 2.0 * a;
  } else {
    if (!(rho > 0.0)) throw std::invalid_argument("scalar_toy: rho must be positive");
    const double mag = 2.0 * std::abs(a) / (2.0 + rho);
    toy.u_star = mag;
    toy.gamma_star = a >= 0.0 ? mag : -mag;
    toy.lambda_star = rho * mag;
  }
  return toy;
}

Dataset scalar_toy_dataset(const ScalarToy& toy) {
  Dataset ds;
  ds.recipe = std::string("scalar_toy/") + (toy.kind == ScalarToy::Kind::strict_kkt ? "strict" : "resilient") +
              "/a=" + format_decimal(toy.a);
  ds.input_rep = Representation::set(1, 1);
  ds.target_rep = ds.input_rep;
  ds.inputs.emplace_back(Shape{1, 1}, std::vector<double>{1.0});
  ds.targets.emplace_back(Shape{1, 1}, std::vector<double>{toy.a});
  ds.splits.train = {0};
  return ds;
}

HomotopicModel scalar_toy_model(double gamma_init) {
  const auto rep = Representation::set(1, 1);
  EquivariantLayer eq(EquivariantKind::deepsets_linear, rep, rep,
                      {Tensor::zeros({1, 1}, true), Tensor::zeros({1, 1}, true)});
  NonEquivariantLayer neq(NonEquivariantKind::dense, {1, 1}, {1, 1}, {Tensor({1, 1}, {1.0}, true)});
  std::vector<HomotopicLayer> layers;
  layers.push_back(HomotopicLayer{std::move(eq), std::move(neq), Parameter(Tensor::scalar(gamma_init, true))});
  return HomotopicModel(std::move(layers));
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_dataset: cannot write " + path.string());
  Writer w(out);
  w.bytes(kDatasetMagic, sizeof kDatasetMagic);
  w.u64(kDatasetVersion);
  w.str(dataset.recipe);
  w.u64(dataset.seed);
  w.str(to_string(dataset.symmetry.kind));
  w.f64(dataset.symmetry.epsilon);
  w.str(representation_to_json(dataset.input_rep).dump());
  w.str(representation_to_json(dataset.target_rep).dump());
  w.indices(dataset.splits.train);
  w.indices(dataset.splits.val);
  w.indices(dataset.splits.test);
  w.u64(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    w.tensor(dataset.inputs[i]);
    w.tensor(dataset.targets[i]);
  }
  if (!out) throw std::runtime_error("save_dataset: write failed for " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_dataset: cannot read " + path.string());
  Reader r(in);
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kDatasetMagic, sizeof magic) != 0) throw std::runtime_error("load_dataset: not a dataset container");
  if (const auto version = r.u64(); version != kDatasetVersion)
    throw std::runtime_error("load_dataset: unsupported version " + std::to_string(version));
  Dataset ds;
  ds.recipe = r.str();
  ds.seed = r.u64();
  const std::string kind = r.str();
  ds.symmetry.kind = kind == "none"          ? SymmetryBreakSpec::Kind::none
                     : kind == "subgroup_c2" ? SymmetryBreakSpec::Kind::subgroup_c2
                                             : SymmetryBreakSpec::Kind::arbitrary;
  ds.symmetry.epsilon = r.f64();
  ds.input_rep = representation_from_json(Json::parse(r.str()));
  ds.target_rep = representation_from_json(Json::parse(r.str()));
  ds.splits.train = r.indices();
  ds.splits.val = r.indices();
  ds.splits.test = r.indices();
  const auto n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    ds.inputs.push_back(r.tensor());
    ds.targets.push_back(r.tensor());
  }
  return ds;
}

void write_dataset_csv(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("write_dataset_csv: cannot write " + path.string());
  std::vector<const char*> split_of(dataset.size(), "");
  for (auto i : dataset.splits.train) split_of.at(i) = "train";
  for (auto i : dataset.splits.val) split_of.at(i) = "val";
  for (auto i : dataset.splits.test) split_of.at(i) = "test";
  const std::size_t n_in = numel(dataset.input_rep.shape), n_out = numel(dataset.target_rep.shape);
  out << "index,split";
  for (std::size_t j = 0; j < n_in; ++j) out << ",x_" << j;
  for (std::size_t j = 0; j < n_out; ++j) out << ",y_" << j;
  out << '\n';
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    out << i << ',' << split_of[i];
    for (double v : dataset.inputs[i].values()) out << ',' << format_decimal(v);
    for (double v : dataset.targets[i].values()) out << ',' << format_decimal(v);
    out << '\n';
  }
}

}  // namespace ace
