#include "ace/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>

namespace ace {
namespace {

std::atomic<std::uint64_t> next_node_id{1};
thread_local bool tape_enabled = true;

std::shared_ptr<detail::Node> make_node(Shape shape, std::vector<double> values, bool requires_grad) {
  if (numel(shape) != values.size()) {
    throw ShapeError("tensor: shape " + to_string(shape) + " holds " + std::to_string(numel(shape)) +
                     " elements but " + std::to_string(values.size()) + " values were given");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  node->id = next_node_id.fetch_add(1, std::memory_order_relaxed);
  return node;
}

const detail::Node& checked(const std::shared_ptr<detail::Node>& node) {
  if (!node) throw std::logic_error("tensor: use of an undefined tensor");
  return *node;
}

bool is_single(const Tensor& t) { return t.numel() == 1; }

// Result shape for the scalar-with-tensor broadcast rule.
Shape broadcast_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return a.shape();
  if (is_single(a) && !is_single(b)) return b.shape();
  if (is_single(b) && !is_single(a)) return a.shape();
  if (is_single(a) && is_single(b)) return a.rank() >= b.rank() ? a.shape() : b.shape();
  throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

template <typename Fwd, typename DA, typename DB>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, Fwd fwd, DA da, DB db) {
  Shape shape = broadcast_shape(name, a, b);
  const std::size_t n = numel(shape);
  const bool a_bc = a.numel() != n;
  const bool b_bc = b.numel() != n;
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[a_bc ? 0 : i], bv[b_bc ? 0 : i]);
  auto an = a.node();
  auto bn = b.node();
  return Tensor::make_result(
      std::move(shape), std::move(out), {a, b},
      [an, bn, a_bc, b_bc, da, db](std::span<const double> g, std::span<std::vector<double>* const> pg) {
        const auto& x = an->value;
        const auto& y = bn->value;
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double xa = x[a_bc ? 0 : i];
          const double yb = y[b_bc ? 0 : i];
          if (pg[0]) (*pg[0])[a_bc ? 0 : i] += g[i] * da(xa, yb);
          if (pg[1]) (*pg[1])[b_bc ? 0 : i] += g[i] * db(xa, yb);
        }
      },
      name);
}

template <typename Fwd, typename D>
Tensor unary_op(const char* name, const Tensor& a, Fwd fwd, D d) {
  auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  auto an = a.node();
  return Tensor::make_result(
      a.shape(), std::move(out), {a},
      [an, d](std::span<const double> g, std::span<std::vector<double>* const> pg) {
        if (!pg[0]) return;
        const auto& x = an->value;
        for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i] * d(x[i]);
      },
      name);
}

std::vector<std::size_t> validated_axes(const char* op, const Tensor& a, std::vector<std::size_t> axes) {
  std::sort(axes.begin(), axes.end());
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (axes[i] >= a.rank() || (i > 0 && axes[i] == axes[i - 1])) {
      std::ostringstream msg;
      msg << op << ": invalid axis " << axes[i] << " for shape " << to_string(a.shape());
      throw ShapeError(msg.str());
    }
  }
  return axes;
}

// For each input element, the flat index of the output cell it reduces into.
std::vector<std::size_t> reduction_map(const Shape& shape, const std::vector<std::size_t>& axes, Shape& out_shape) {
  std::vector<bool> reduced(shape.size(), false);
  for (auto ax : axes) reduced[ax] = true;
  out_shape.clear();
  for (std::size_t d = 0; d < shape.size(); ++d)
    if (!reduced[d]) out_shape.push_back(shape[d]);

  std::vector<std::size_t> out_stride(shape.size(), 0);
  std::size_t stride = 1;
  for (std::size_t d = shape.size(); d-- > 0;) {
    if (!reduced[d]) {
      out_stride[d] = stride;
      stride *= shape[d];
    }
  }
  const std::size_t n = numel(shape);
  std::vector<std::size_t> map(n);
  std::vector<std::size_t> idx(shape.size(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t o = 0;
    for (std::size_t d = 0; d < shape.size(); ++d) o += idx[d] * out_stride[d];
    map[i] = o;
    for (std::size_t d = shape.size(); d-- > 0;) {
      if (++idx[d] < shape[d]) break;
      idx[d] = 0;
    }
  }
  return map;
}

Tensor reduce_impl(ReduceOp op, const Tensor& a, const std::vector<std::size_t>& raw_axes) {
  const char* name = op == ReduceOp::sum ? "sum" : op == ReduceOp::mean ? "mean" : "l2_norm";
  auto axes = validated_axes(name, a, raw_axes);
  Shape out_shape;
  auto map = reduction_map(a.shape(), axes, out_shape);
  const std::size_t n_out = numel(out_shape);
  const std::size_t count = n_out == 0 ? 0 : a.numel() / n_out;
  auto av = a.values();
  std::vector<double> out(n_out, 0.0);
  if (op == ReduceOp::l2_norm) {
    for (std::size_t i = 0; i < av.size(); ++i) out[map[i]] += av[i] * av[i];
    for (auto& v : out) v = std::sqrt(v);
  } else {
    for (std::size_t i = 0; i < av.size(); ++i) out[map[i]] += av[i];
    if (op == ReduceOp::mean && count > 0)
      for (auto& v : out) v /= static_cast<double>(count);
  }
  auto an = a.node();
  auto norms = op == ReduceOp::l2_norm ? out : std::vector<double>{};
  return Tensor::make_result(
      std::move(out_shape), std::move(out), {a},
      [an, op, map = std::move(map), norms = std::move(norms), count](std::span<const double> g,
                                                                       std::span<std::vector<double>* const> pg) {
        if (!pg[0]) return;
        auto& ga = *pg[0];
        const auto& x = an->value;
        for (std::size_t i = 0; i < ga.size(); ++i) {
          const double go = g[map[i]];
          switch (op) {
            case ReduceOp::sum:
              ga[i] += go;
              break;
            case ReduceOp::mean:
              ga[i] += go / static_cast<double>(count);
              break;
            case ReduceOp::l2_norm:
              if (norms[map[i]] > 0.0) ga[i] += go * x[i] / norms[map[i]];
              break;
          }
        }
      },
      name);
}

std::vector<std::size_t> all_axes(const Tensor& a) {
  std::vector<std::size_t> axes(a.rank());
  std::iota(axes.begin(), axes.end(), 0);
  return axes;
}

}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
  out << ']';
  return out.str();
}

NoGradGuard::NoGradGuard() : previous_(tape_enabled) { tape_enabled = false; }
NoGradGuard::~NoGradGuard() { tape_enabled = previous_; }
bool grad_enabled() { return tape_enabled; }

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(make_node(std::move(shape), std::move(values), requires_grad)) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = ace::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({}, {value}, requires_grad); }

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values), requires_grad);
}

Tensor Tensor::make_result(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                           detail::BackwardFn backward, const char* op) {
  bool any = false;
  if (tape_enabled)
    for (const auto& p : parents) any = any || (p.defined() && p.requires_grad());
  auto node = make_node(std::move(shape), std::move(values), any);
  node->op = op;
  if (any) {
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node_);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

const Shape& Tensor::shape() const { return checked(node_).shape; }
std::size_t Tensor::numel() const { return checked(node_).value.size(); }
std::span<const double> Tensor::values() const { return checked(node_).value; }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item: tensor of shape " + to_string(shape()) + " is not a scalar");
  return node_->value[0];
}

double Tensor::at(std::size_t flat_index) const { return checked(node_).value.at(flat_index); }

std::span<double> Tensor::mutable_values() {
  if (!is_leaf()) throw std::logic_error("tensor: only leaf values may be modified in place");
  return node_->value;
}

bool Tensor::requires_grad() const { return checked(node_).requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  if (!is_leaf()) throw std::logic_error("tensor: requires_grad can only be set on leaves");
  node_->requires_grad = flag;
}

bool Tensor::is_leaf() const { return checked(node_).parents.empty(); }
bool Tensor::has_grad() const { return !checked(node_).grad.empty(); }
std::span<const double> Tensor::grad() const { return checked(node_).grad; }

std::span<double> Tensor::mutable_grad() {
  checked(node_);
  if (node_->grad.empty()) node_->grad.assign(node_->value.size(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() {
  checked(node_);
  node_->grad.clear();
}

void Tensor::backward() const {
  const auto& root = checked(node_);
  if (root.value.size() != 1)
    throw ShapeError("backward: loss must be a scalar, got shape " + to_string(root.shape));
  if (!root.requires_grad) return;

  // Creation ids are a topological order: parents always precede children.
  std::vector<detail::Node*> order;
  std::vector<detail::Node*> stack{node_.get()};
  std::vector<std::uint64_t> seen;
  while (!stack.empty()) {
    auto* n = stack.back();
    stack.pop_back();
    auto it = std::lower_bound(seen.begin(), seen.end(), n->id);
    if (it != seen.end() && *it == n->id) continue;
    seen.insert(it, n->id);
    order.push_back(n);
    for (auto& p : n->parents)
      if (p->requires_grad) stack.push_back(p.get());
  }
  std::sort(order.begin(), order.end(), [](auto* x, auto* y) { return x->id > y->id; });

  for (auto* n : order) {
    if (!n->parents.empty())
      n->grad.assign(n->value.size(), 0.0);
    else if (n->grad.empty())
      n->grad.assign(n->value.size(), 0.0);
  }
  node_->grad[0] += 1.0;

  std::vector<std::vector<double>*> pg;
  for (auto* n : order) {
    if (n->parents.empty() || !n->backward) continue;
    pg.clear();
    for (auto& p : n->parents) pg.push_back(p->requires_grad ? &p->grad : nullptr);
    n->backward(n->grad, pg);
    n->grad.clear();
    n->grad.shrink_to_fit();
  }
}

Tensor Tensor::detach() const {
  const auto& n = checked(node_);
  return Tensor(n.shape, n.value, false);
}

Tensor Tensor::deep_copy() const {
  const auto& n = checked(node_);
  Tensor copy(n.shape, n.value, n.requires_grad);
  copy.node_->grad = n.parents.empty() ? n.grad : std::vector<double>{};
  return copy;
}

const char* Tensor::op_name() const { return checked(node_).op; }

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

// Subgradient 0 at the kink for both relu and abs.
Tensor relu(const Tensor& a) {
  return unary_op(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor abs(const Tensor& a) {
  return unary_op(
      "abs", a, [](double x) { return std::abs(x); },
      [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor square(const Tensor& a) {
  return unary_op(
      "square", a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary_op(
      "scale", a, [factor](double x) { return factor * x; }, [factor](double) { return factor; });
}

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b) {
  const bool binary = op == ElementwiseOp::add || op == ElementwiseOp::sub || op == ElementwiseOp::mul;
  if (binary && !b.defined()) throw std::invalid_argument("elementwise: binary op needs two operands");
  switch (op) {
    case ElementwiseOp::add: return add(a, b);
    case ElementwiseOp::sub: return sub(a, b);
    case ElementwiseOp::mul: return mul(a, b);
    case ElementwiseOp::relu: return relu(a);
    case ElementwiseOp::abs: return abs(a);
    case ElementwiseOp::square: return square(a);
  }
  throw std::invalid_argument("elementwise: unknown op");
}

Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
Tensor operator*(double factor, const Tensor& a) { return scale(a, factor); }
Tensor operator*(const Tensor& a, double factor) { return scale(a, factor); }
Tensor operator-(const Tensor& a) { return scale(a, -1.0); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw ShapeError("matmul: inner dimensions disagree for " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = bv.data() + p * n;
      double* orow = out.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  auto an = a.node();
  auto bn = b.node();
  return Tensor::make_result(
      {m, n}, std::move(out), {a, b},
      [an, bn, m, k, n](std::span<const double> g, std::span<std::vector<double>* const> pg) {
        const auto& x = an->value;
        const auto& y = bn->value;
        if (pg[0]) {  // dA = G B^T
          auto& ga = *pg[0];
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const double* grow = g.data() + i * n;
              const double* yrow = y.data() + p * n;
              double acc = 0.0;
              for (std::size_t j = 0; j < n; ++j) acc += grow[j] * yrow[j];
              ga[i * k + p] += acc;
            }
        }
        if (pg[1]) {  // dB = A^T G
          auto& gb = *pg[1];
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const double xip = x[i * k + p];
              if (xip == 0.0) continue;
              const double* grow = g.data() + i * n;
              double* brow = gb.data() + p * n;
              for (std::size_t j = 0; j < n; ++j) brow[j] += xip * grow[j];
            }
        }
      },
      "matmul");
}

Tensor conv2d(const Tensor& input, const Tensor& kernels) {
  if (input.rank() != 3 || kernels.rank() != 4) {
    throw ShapeError("conv2d: expected input C x H x W and kernels O x C x k x k, got " + to_string(input.shape()) +
                     " and " + to_string(kernels.shape()));
  }
  const std::size_t C = input.shape()[0], H = input.shape()[1], W = input.shape()[2];
  const std::size_t O = kernels.shape()[0], k = kernels.shape()[2];
  if (kernels.shape()[3] != k) throw ShapeError("conv2d: kernels must be square, got " + to_string(kernels.shape()));
  if (k % 2 == 0) throw ShapeError("conv2d: kernel size must be odd, got " + std::to_string(k));
  if (kernels.shape()[1] != C) {
    throw ShapeError("conv2d: channel mismatch, input " + to_string(input.shape()) + " vs kernels " +
                     to_string(kernels.shape()));
  }
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  const auto Hs = static_cast<std::ptrdiff_t>(H), Ws = static_cast<std::ptrdiff_t>(W);

  // Visits every (output pixel, input pixel, weight) triple of the correlation.
  auto for_each_tap = [=](auto&& body) {
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t dy = 0; dy < k; ++dy)
          for (std::size_t dx = 0; dx < k; ++dx) {
            const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(dy) - pad;
            const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(dx) - pad;
            const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, -oy), y1 = std::min(Hs, Hs - oy);
            const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -ox), x1 = std::min(Ws, Ws - ox);
            if (y0 >= y1 || x0 >= x1) continue;
            const std::size_t kidx = ((o * C + c) * k + dy) * k + dx;
            for (std::ptrdiff_t y = y0; y < y1; ++y) {
              const std::size_t out_row = (o * H + static_cast<std::size_t>(y)) * W;
              const std::size_t in_row = (c * H + static_cast<std::size_t>(y + oy)) * W;
              body(kidx, out_row + static_cast<std::size_t>(x0), in_row + static_cast<std::size_t>(x0 + ox),
                   static_cast<std::size_t>(x1 - x0));
            }
          }
  };

  auto iv = input.values();
  auto kv = kernels.values();
  std::vector<double> out(O * H * W, 0.0);
  for_each_tap([&](std::size_t kidx, std::size_t out_at, std::size_t in_at, std::size_t len) {
    const double w = kv[kidx];
    for (std::size_t t = 0; t < len; ++t) out[out_at + t] += w * iv[in_at + t];
  });

  auto in_node = input.node();
  auto k_node = kernels.node();
  return Tensor::make_result(
      {O, H, W}, std::move(out), {input, kernels},
      [in_node, k_node, for_each_tap](std::span<const double> g, std::span<std::vector<double>* const> pg) {
        const auto& x = in_node->value;
        const auto& w = k_node->value;
        for_each_tap([&](std::size_t kidx, std::size_t out_at, std::size_t in_at, std::size_t len) {
          if (pg[0]) {
            auto& gi = *pg[0];
            const double wk = w[kidx];
            for (std::size_t t = 0; t < len; ++t) gi[in_at + t] += wk * g[out_at + t];
          }
          if (pg[1]) {
            double acc = 0.0;
            for (std::size_t t = 0; t < len; ++t) acc += x[in_at + t] * g[out_at + t];
            (*pg[1])[kidx] += acc;
          }
        });
      },
      "conv2d");
}

Tensor reduce(ReduceOp op, const Tensor& a) { return reduce_impl(op, a, all_axes(a)); }
Tensor reduce(ReduceOp op, const Tensor& a, const std::vector<std::size_t>& axes) { return reduce_impl(op, a, axes); }
Tensor sum(const Tensor& a) { return reduce(ReduceOp::sum, a); }
Tensor sum(const Tensor& a, const std::vector<std::size_t>& axes) { return reduce(ReduceOp::sum, a, axes); }
Tensor mean(const Tensor& a) { return reduce(ReduceOp::mean, a); }
Tensor mean(const Tensor& a, const std::vector<std::size_t>& axes) { return reduce(ReduceOp::mean, a, axes); }
Tensor l2_norm(const Tensor& a) { return reduce(ReduceOp::l2_norm, a); }
Tensor l2_norm(const Tensor& a, const std::vector<std::size_t>& axes) { return reduce(ReduceOp::l2_norm, a, axes); }

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  return Tensor::make_result(
      std::move(shape), std::move(out), {a},
      [](std::span<const double> g, std::span<std::vector<double>* const> pg) {
        if (!pg[0]) return;
        for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
      },
      "reshape");
}

Tensor gather(const Tensor& a, std::vector<std::size_t> source, Shape shape) {
  if (numel(shape) != source.size()) {
    throw ShapeError("gather: index count " + std::to_string(source.size()) + " does not fill " + to_string(shape));
  }
  auto av = a.values();
  std::vector<double> out(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (source[i] >= av.size()) throw ShapeError("gather: index out of range for " + to_string(a.shape()));
    out[i] = av[source[i]];
  }
  return Tensor::make_result(
      std::move(shape), std::move(out), {a},
      [source = std::move(source)](std::span<const double> g, std::span<std::vector<double>* const> pg) {
        if (!pg[0]) return;
        for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[source[i]] += g[i];
      },
      "gather");
}

Tensor stack(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("stack: no tensors given");
  const Shape& inner = parts.front().shape();
  Shape shape{parts.size()};
  shape.insert(shape.end(), inner.begin(), inner.end());
  std::vector<double> out;
  out.reserve(numel(shape));
  for (const auto& p : parts) {
    if (p.shape() != inner) throw ShapeError("stack: shape mismatch " + to_string(inner) + " vs " + to_string(p.shape()));
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  const std::size_t block = numel(inner);
  return Tensor::make_result(
      std::move(shape), std::move(out), std::vector<Tensor>(parts.begin(), parts.end()),
      [block](std::span<const double> g, std::span<std::vector<double>* const> pg) {
        for (std::size_t p = 0; p < pg.size(); ++p) {
          if (!pg[p]) continue;
          for (std::size_t i = 0; i < block; ++i) (*pg[p])[i] += g[p * block + i];
        }
      },
      "stack");
}

double norm2(std::span<const double> values) {
  double acc = 0.0;
  for (double v : values) acc += v * v;
  return std::sqrt(acc);
}

}  // namespace ace
