#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "ace/tensor.hpp"

namespace ace {

enum class GroupKind { cyclic4, symmetric };

/// An element of C4 (rotation count 0..3) or S_n (a permutation).
///
/// For S_n, `perm[i]` is the source row of output row i, so acting on
/// [[a],[b],[c]] with perm (1,2,0) yields [[b],[c],[a]].
struct GroupElement {
  GroupKind kind = GroupKind::cyclic4;
  int rotation = 0;
  std::vector<std::size_t> perm;

  bool operator==(const GroupElement&) const = default;
  std::string to_string() const;
};

class Group {
 public:
  static Group c4();
  static Group symmetric(std::size_t n);

  GroupKind kind() const { return kind_; }
  /// 4 for C4, n for S_n.
  std::size_t degree() const { return degree_; }
  /// |G|; n! for S_n (saturates for very large n).
  std::size_t order() const;
  bool enumerable() const;
  std::string name() const;

  GroupElement identity() const;
  /// Product g*h, with rho(g*h) = rho(g) rho(h).
  GroupElement compose(const GroupElement& g, const GroupElement& h) const;
  GroupElement inverse(const GroupElement& g) const;

  /// Every element, identity first. S_n refuses n > 6; use sample() instead.
  std::vector<GroupElement> elements() const;
  GroupElement sample(std::mt19937_64& rng) const;

  bool operator==(const Group&) const = default;

 private:
  Group(GroupKind kind, std::size_t degree) : kind_(kind), degree_(degree) {}
  void check(const GroupElement& g) const;

  GroupKind kind_;
  std::size_t degree_;
};

enum class SpaceKind { image, regular, set, vector };

/// Layer space descriptor together with the group action on it.
///
/// image:   C x H x W, C4 rotates each channel, S_n has no action.
/// regular: 4 x C x H x W, C4 rotates spatially and shifts the group axis.
/// set:     n x d, S_n permutes rows, C4 acts trivially.
/// vector:  k, S_k permutes coordinates, C4 acts trivially.
struct Representation {
  SpaceKind kind = SpaceKind::vector;
  Shape shape;

  static Representation image(std::size_t channels, std::size_t height, std::size_t width);
  static Representation regular(std::size_t channels, std::size_t height, std::size_t width);
  static Representation set(std::size_t n_points, std::size_t dim);
  static Representation vector(std::size_t dim);

  /// Every shipped action is an index permutation, hence an isometry.
  double operator_bound() const { return 1.0; }

  bool operator==(const Representation&) const = default;
  std::string to_string() const;
};

/// Index table of rho(g) on `rep`: (rho(g) z)[i] = z[table[i]].
std::vector<std::size_t> action_indices(const GroupElement& g, const Representation& rep);

/// rho(g) z. Differentiable, since the action is a gather.
Tensor apply(const GroupElement& g, const Representation& rep, const Tensor& z);

/// Regular C4 action on a 4 x C x H x W feature map.
Tensor apply_regular(const GroupElement& g, const Tensor& z);

/// Source pixel of output pixel (row, col) after `rotation` counterclockwise quarter turns.
std::size_t rotated_source(std::size_t row, std::size_t col, std::size_t size, int rotation);

}  // namespace ace
