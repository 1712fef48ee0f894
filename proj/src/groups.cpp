#include "ace/groups.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace ace {
namespace {

constexpr std::size_t kMaxEnumerableDegree = 6;

int mod4(int r) { return ((r % 4) + 4) % 4; }

void require_square_image(const Shape& shape, std::size_t h_axis) {
  if (shape[h_axis] != shape[h_axis + 1]) {
    throw ShapeError("C4 rotation needs a square image, got " + to_string(shape));
  }
}

void require_shape(const Representation& rep, const Tensor& z) {
  if (z.shape() != rep.shape) {
    throw ShapeError("group action: tensor " + to_string(z.shape()) + " does not live in " + rep.to_string());
  }
}

}  // namespace

std::string GroupElement::to_string() const {
  std::ostringstream out;
  if (kind == GroupKind::cyclic4) {
    out << "r" << rotation;
  } else {
    out << '(';
    for (std::size_t i = 0; i < perm.size(); ++i) out << (i ? "," : "") << perm[i];
    out << ')';
  }
  return out.str();
}

Group Group::c4() { return Group(GroupKind::cyclic4, 4); }

Group Group::symmetric(std::size_t n) {
  if (n == 0) throw std::invalid_argument("symmetric group needs n >= 1");
  return Group(GroupKind::symmetric, n);
}

std::size_t Group::order() const {
  if (kind_ == GroupKind::cyclic4) return 4;
  std::size_t f = 1;
  for (std::size_t i = 2; i <= degree_; ++i) {
    if (f > std::numeric_limits<std::size_t>::max() / i) return std::numeric_limits<std::size_t>::max();
    f *= i;
  }
  return f;
}

bool Group::enumerable() const { return kind_ == GroupKind::cyclic4 || degree_ <= kMaxEnumerableDegree; }

std::string Group::name() const { return kind_ == GroupKind::cyclic4 ? "C4" : "S" + std::to_string(degree_); }

GroupElement Group::identity() const {
  GroupElement e;
  e.kind = kind_;
  if (kind_ == GroupKind::symmetric) {
    e.perm.resize(degree_);
    std::iota(e.perm.begin(), e.perm.end(), 0);
  }
  return e;
}

void Group::check(const GroupElement& g) const {
  if (g.kind != kind_) throw std::invalid_argument("group element " + g.to_string() + " is not in " + name());
  if (kind_ == GroupKind::cyclic4 && (g.rotation < 0 || g.rotation > 3))
    throw std::invalid_argument("C4 rotation count out of range: " + std::to_string(g.rotation));
  if (kind_ == GroupKind::symmetric) {
    std::vector<bool> seen(degree_, false);
    bool ok = g.perm.size() == degree_;
    for (std::size_t i = 0; ok && i < degree_; ++i) {
      ok = g.perm[i] < degree_ && !seen[g.perm[i]];
      if (ok) seen[g.perm[i]] = true;
    }
    if (!ok) throw std::invalid_argument("permutation " + g.to_string() + " is not in " + name());
  }
}

GroupElement Group::compose(const GroupElement& g, const GroupElement& h) const {
  check(g);
  check(h);
  GroupElement out;
  out.kind = kind_;
  if (kind_ == GroupKind::cyclic4) {
    out.rotation = mod4(g.rotation + h.rotation);
  } else {
    // rho(g) rho(h) z: first rows pulled by h, then by g.
    out.perm.resize(degree_);
    for (std::size_t i = 0; i < degree_; ++i) out.perm[i] = h.perm[g.perm[i]];
  }
  return out;
}

GroupElement Group::inverse(const GroupElement& g) const {
  check(g);
  GroupElement out;
  out.kind = kind_;
  if (kind_ == GroupKind::cyclic4) {
    out.rotation = mod4(-g.rotation);
  } else {
    out.perm.resize(degree_);
    for (std::size_t i = 0; i < degree_; ++i) out.perm[g.perm[i]] = i;
  }
  return out;
}

std::vector<GroupElement> Group::elements() const {
  if (!enumerable()) {
    throw std::invalid_argument(name() + " has " + std::to_string(order()) +
                                " elements; enumeration is limited to n <= 6, use sample()");
  }
  std::vector<GroupElement> out;
  if (kind_ == GroupKind::cyclic4) {
    for (int r = 0; r < 4; ++r) out.push_back(GroupElement{GroupKind::cyclic4, r, {}});
    return out;
  }
  auto perm = identity().perm;
  do {
    out.push_back(GroupElement{GroupKind::symmetric, 0, perm});
  } while (std::next_permutation(perm.begin(), perm.end()));
  return out;
}

GroupElement Group::sample(std::mt19937_64& rng) const {
  if (kind_ == GroupKind::cyclic4) {
    std::uniform_int_distribution<int> pick(0, 3);
    return GroupElement{GroupKind::cyclic4, pick(rng), {}};
  }
  auto e = identity();
  std::shuffle(e.perm.begin(), e.perm.end(), rng);
  return e;
}

Representation Representation::image(std::size_t channels, std::size_t height, std::size_t width) {
  return {SpaceKind::image, {channels, height, width}};
}

Representation Representation::regular(std::size_t channels, std::size_t height, std::size_t width) {
  return {SpaceKind::regular, {4, channels, height, width}};
}

Representation Representation::set(std::size_t n_points, std::size_t dim) { return {SpaceKind::set, {n_points, dim}}; }

Representation Representation::vector(std::size_t dim) { return {SpaceKind::vector, {dim}}; }

std::string Representation::to_string() const {
  const char* names[] = {"image", "regular", "set", "vector"};
  return std::string(names[static_cast<int>(kind)]) + ace::to_string(shape);
}

std::size_t rotated_source(std::size_t row, std::size_t col, std::size_t size, int rotation) {
  const std::size_t last = size - 1;
  switch (mod4(rotation)) {
    case 0: return row * size + col;
    case 1: return col * size + (last - row);
    case 2: return (last - row) * size + (last - col);
    default: return (last - col) * size + row;
  }
}

std::vector<std::size_t> action_indices(const GroupElement& g, const Representation& rep) {
  const std::size_t n = numel(rep.shape);
  std::vector<std::size_t> table(n);
  std::iota(table.begin(), table.end(), 0);

  if (g.kind == GroupKind::cyclic4) {
    if (g.rotation < 0 || g.rotation > 3) throw std::invalid_argument("C4 rotation count out of range");
    switch (rep.kind) {
      case SpaceKind::image: {
        require_square_image(rep.shape, 1);
        const std::size_t C = rep.shape[0], S = rep.shape[1], plane = S * S;
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t i = 0; i < S; ++i)
            for (std::size_t j = 0; j < S; ++j)
              table[c * plane + i * S + j] = c * plane + rotated_source(i, j, S, g.rotation);
        return table;
      }
      case SpaceKind::regular: {
        if (rep.shape.size() != 4 || rep.shape[0] != 4)
          throw ShapeError("regular C4 action needs a leading group axis of length 4, got " + to_string(rep.shape));
        require_square_image(rep.shape, 2);
        const std::size_t C = rep.shape[1], S = rep.shape[2], plane = S * S;
        for (std::size_t t = 0; t < 4; ++t) {
          const std::size_t src_t = static_cast<std::size_t>(mod4(static_cast<int>(t) - g.rotation));
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < S; ++i)
              for (std::size_t j = 0; j < S; ++j)
                table[(t * C + c) * plane + i * S + j] = (src_t * C + c) * plane + rotated_source(i, j, S, g.rotation);
        }
        return table;
      }
      case SpaceKind::set:
      case SpaceKind::vector:
        return table;
    }
  }

  switch (rep.kind) {
    case SpaceKind::set: {
      if (rep.shape[0] != g.perm.size())
        throw ShapeError("permutation of " + std::to_string(g.perm.size()) + " points cannot act on " + rep.to_string());
      const std::size_t d = rep.shape[1];
      for (std::size_t i = 0; i < rep.shape[0]; ++i)
        for (std::size_t k = 0; k < d; ++k) table[i * d + k] = g.perm[i] * d + k;
      return table;
    }
    case SpaceKind::vector: {
      if (rep.shape[0] != g.perm.size())
        throw ShapeError("permutation of " + std::to_string(g.perm.size()) + " coordinates cannot act on " +
                         rep.to_string());
      for (std::size_t i = 0; i < n; ++i) table[i] = g.perm[i];
      return table;
    }
    default:
      throw ShapeError("symmetric group has no action on " + rep.to_string());
  }
}

Tensor apply(const GroupElement& g, const Representation& rep, const Tensor& z) {
  require_shape(rep, z);
  return gather(z, action_indices(g, rep), rep.shape);
}

Tensor apply_regular(const GroupElement& g, const Tensor& z) {
  if (z.rank() != 4 || z.shape()[0] != 4) {
    throw ShapeError("apply_regular: expected 4 x C x H x W, got " + to_string(z.shape()));
  }
  if (g.kind != GroupKind::cyclic4) throw std::invalid_argument("apply_regular: element is not in C4");
  Representation rep{SpaceKind::regular, z.shape()};
  return gather(z, action_indices(g, rep), rep.shape);
}

}  // namespace ace
