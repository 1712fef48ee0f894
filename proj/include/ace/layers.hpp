#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ace/groups.hpp"
#include "ace/tensor.hpp"

namespace ace {

/// A trainable leaf tensor with value semantics: copying a Parameter copies
/// its values, so copied layers and models never alias weights.
class Parameter {
 public:
  Parameter() = default;
  explicit Parameter(Tensor tensor) : tensor_(std::move(tensor)) {}
  Parameter(const Parameter& other) : tensor_(other.tensor_.defined() ? other.tensor_.deep_copy() : Tensor()) {}
  Parameter& operator=(const Parameter& other) {
    if (this != &other) tensor_ = other.tensor_.defined() ? other.tensor_.deep_copy() : Tensor();
    return *this;
  }
  Parameter(Parameter&&) noexcept = default;
  Parameter& operator=(Parameter&&) noexcept = default;

  Tensor& tensor() { return tensor_; }
  const Tensor& tensor() const { return tensor_; }

 private:
  Tensor tensor_;
};

enum class EquivariantKind { c4_lifting_conv, c4_group_conv, deepsets_linear };
std::string to_string(EquivariantKind kind);
EquivariantKind equivariant_kind_from_string(const std::string& name);

/// Exactly equivariant, bias-free linear layer.
///
/// c4_lifting_conv: C x H x W -> 4 x C' x H x W, weight C' x C x k x k.
/// c4_group_conv:   4 x C x H x W -> 4 x C' x H x W, weight C' x 4 x C x k x k.
/// deepsets_linear: n x d -> n x d', Z A + mean-rows(Z) B, weights A, B (d x d').
class EquivariantLayer {
 public:
  EquivariantLayer() = default;
  EquivariantLayer(EquivariantKind kind, Representation input, Representation output, std::vector<Tensor> weights);

  static EquivariantLayer c4_lifting(std::size_t in_channels, std::size_t out_channels, std::size_t image_size,
                                     std::size_t kernel_size, std::mt19937_64& rng, double init_scale = 1.0);
  static EquivariantLayer c4_group(std::size_t in_channels, std::size_t out_channels, std::size_t image_size,
                                   std::size_t kernel_size, std::mt19937_64& rng, double init_scale = 1.0);
  static EquivariantLayer deepsets(std::size_t n_points, std::size_t in_dim, std::size_t out_dim,
                                   std::mt19937_64& rng, double init_scale = 1.0);

  Tensor forward(const Tensor& z) const;

  /// Rotated (and for group convs, group-shifted) kernel copies as one
  /// 4C' x C_in x k x k convolution bank. Conv kinds only.
  Tensor kernel_bank() const;

  EquivariantKind kind() const { return kind_; }
  const Representation& input_rep() const { return input_; }
  const Representation& output_rep() const { return output_; }
  std::vector<Parameter>& weights() { return weights_; }
  const std::vector<Parameter>& weights() const { return weights_; }

 private:
  void validate() const;

  EquivariantKind kind_ = EquivariantKind::deepsets_linear;
  Representation input_;
  Representation output_;
  std::vector<Parameter> weights_;
};

enum class NonEquivariantKind { dense, mlp };
std::string to_string(NonEquivariantKind kind);
NonEquivariantKind non_equivariant_kind_from_string(const std::string& name);

/// Bias-free dense map (or 2-layer ReLU MLP) on the flattened layer space.
/// Matrices act on row vectors: y = x W, W is n_in x n_out.
class NonEquivariantLayer {
 public:
  NonEquivariantLayer() = default;
  NonEquivariantLayer(NonEquivariantKind kind, Shape input_shape, Shape output_shape, std::vector<Tensor> matrices);

  static NonEquivariantLayer dense(Shape input_shape, Shape output_shape, std::mt19937_64& rng,
                                   double init_scale = 1.0);
  static NonEquivariantLayer mlp(Shape input_shape, Shape output_shape, std::size_t hidden, std::mt19937_64& rng,
                                 double init_scale = 1.0);

  Tensor forward(const Tensor& z) const;

  /// Divides every matrix by its power-iteration estimate of sigma_max,
  /// warm-starting from the persisted left vectors. Runs at least `n_iters`
  /// sweeps and continues until the estimate stops moving. Returns the estimates.
  std::vector<double> spectral_normalize(int n_iters);

  /// Power-iteration estimates without modifying weights or persisted state.
  std::vector<double> power_iteration_estimates(int n_iters) const;

  NonEquivariantKind kind() const { return kind_; }
  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const { return output_shape_; }
  std::vector<Parameter>& matrices() { return matrices_; }
  const std::vector<Parameter>& matrices() const { return matrices_; }
  std::vector<std::vector<double>>& power_vectors() { return power_vectors_; }
  const std::vector<std::vector<double>>& power_vectors() const { return power_vectors_; }

 private:
  void validate() const;

  NonEquivariantKind kind_ = NonEquivariantKind::dense;
  Shape input_shape_;
  Shape output_shape_;
  std::vector<Parameter> matrices_;
  std::vector<std::vector<double>> power_vectors_;
};

/// eq(z) + gamma * neq(z).
struct HomotopicLayer {
  EquivariantLayer eq;
  NonEquivariantLayer neq;
  Parameter gamma;

  Tensor forward(const Tensor& z) const;
  double gamma_value() const { return gamma.tensor().item(); }
};

enum class Readout { none, group_mean };
std::string to_string(Readout readout);
Readout readout_from_string(const std::string& name);

/// Activations of one forward pass: z[0] = x, z[i] = output of layer i after
/// its activation; `output` additionally has the readout applied.
struct ForwardTrace {
  std::vector<Tensor> z;
  Tensor output;
};

/// Stack of homotopic layers with ReLU between layers (none after the last),
/// followed by an optional parameter-free equivariant readout.
class HomotopicModel {
 public:
  HomotopicModel() = default;
  explicit HomotopicModel(std::vector<HomotopicLayer> layers, Readout readout = Readout::none);

  Tensor forward(const Tensor& x) const;
  ForwardTrace forward_trace(const Tensor& x) const;

  std::size_t depth() const { return layers_.size(); }
  std::vector<HomotopicLayer>& layers() { return layers_; }
  const std::vector<HomotopicLayer>& layers() const { return layers_; }
  Readout readout() const { return readout_; }

  const Representation& input_rep() const;
  Representation output_rep() const;
  /// Operator norm of the readout (1 without one, 1/2 for the mean over four copies).
  double readout_bound() const;

  std::vector<double> gamma_values() const;
  void set_gammas(double value);
  std::vector<Tensor> gammas() const;
  std::vector<Tensor> equivariant_parameters() const;
  std::vector<Tensor> non_equivariant_parameters() const;

  void validate() const;

 private:
  std::vector<HomotopicLayer> layers_;
  Readout readout_ = Readout::none;
};

/// Copy with every gamma set to zero; the argument is untouched.
HomotopicModel project_equivariant(const HomotopicModel& model);

// ---------------------------------------------------------------------------
// Model construction

struct ModelSpec {
  enum class Family { c4, deepsets };
  Family family = Family::c4;
  std::size_t layers = 2;
  // c4
  std::size_t image_size = 8;
  std::size_t in_channels = 1;
  std::size_t hidden_channels = 4;
  std::size_t out_channels = 1;
  std::size_t kernel_size = 3;
  // deepsets
  std::size_t n_points = 4;
  std::size_t in_dim = 2;
  std::size_t hidden_dim = 8;
  std::size_t out_dim = 2;

  NonEquivariantKind neq = NonEquivariantKind::dense;
  std::size_t neq_hidden = 16;
  double init_scale = 1.0;
  double neq_init_scale = 1.0;
  double gamma_init = 1.0;
  std::uint64_t seed = 0;
};

/// C4 family: lifting conv, then group convs, then the group-mean readout.
/// Deepsets family: deepsets_linear layers, no readout.
HomotopicModel build_model(const ModelSpec& spec);

// ---------------------------------------------------------------------------
// Certified constants

enum class ConvBound {
  /// Sum over kernel taps of the Frobenius norm of the channel-mixing matrix;
  /// never exceeds k * ||K||_F.
  frobenius,
  /// Spectral norm of the unrolled linear map (small shapes only).
  unrolled_exact,
};

/// Certified Lipschitz constant of an equivariant layer.
double lipschitz_bound(const EquivariantLayer& layer, ConvBound method = ConvBound::frobenius);
/// Certified Lipschitz constant of a non-equivariant branch: product of spectral norms.
double lipschitz_bound(const NonEquivariantLayer& layer);
/// Certified B with ||neq(x)|| <= B ||x||. Equals the Lipschitz product since the branch is bias-free.
double operator_bound(const NonEquivariantLayer& layer);

/// Spectral norm of the linear map z -> layer.forward(z), built column by column.
double unrolled_spectral_norm(const EquivariantLayer& layer);

}  // namespace ace
