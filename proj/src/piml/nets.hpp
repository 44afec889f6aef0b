#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "piml/autodiff.hpp"
#include "piml/vecmath.hpp"

namespace piml {

/// Fully connected tanh network with a linear output layer.
struct MlpSpec {
  int input_dim = 1;
  int output_dim = 1;
  int hidden_layers = 0;
  int hidden_width = 1;

  void validate() const;
  std::size_t num_params() const;

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

// Architectures used by the two traffic tasks.
inline constexpr MlpSpec kLwrPunnSpec{2, 1, 8, 20};
inline constexpr MlpSpec kFdLearnerSpec{1, 1, 2, 20};
inline constexpr MlpSpec kCfPunnSpec{3, 1, 3, 60};

struct TensorSlot {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::size_t offset = 0;

  std::size_t count() const { return static_cast<std::size_t>(rows * cols); }
  friend bool operator==(const TensorSlot&, const TensorSlot&) = default;
};

/// Flat trainable parameters plus the layout of the tensors inside them.
struct ParameterVector {
  Vec values;
  std::vector<TensorSlot> layout;

  std::size_t size() const { return static_cast<std::size_t>(values.size()); }

  /// Appends `other`, prefixing its tensor names; returns its base offset.
  std::size_t append(const ParameterVector& other, const std::string& prefix);

  /// Splits `values` into one matrix per layout slot (row-major).
  std::vector<Matrix> unflatten() const;
  /// Inverse of unflatten for this layout.
  void flatten(const std::vector<Matrix>& tensors);
};

class Mlp {
 public:
  Mlp() = default;
  Mlp(MlpSpec spec, std::size_t offset);

  const MlpSpec& spec() const { return spec_; }
  std::size_t offset() const { return offset_; }
  std::size_t num_params() const { return spec_.num_params(); }
  Mlp rebased(std::size_t offset) const { return Mlp(spec_, offset); }

  /// Numeric batch forward: (n x input_dim) -> (n x output_dim). Non-finite
  /// activations raise a numerical error naming the layer.
  Matrix forward(const Vec& params, const Matrix& inputs) const;

  NodeId forward(Tape& tape, const Vec& params, NodeId input) const;
  DualNode forward(Tape& tape, const Vec& params, const DualNode& input) const;

 private:
  std::size_t weight_offset(int layer) const;
  int layer_in(int layer) const;
  int layer_out(int layer) const;
  int num_layers() const { return spec_.hidden_layers + 1; }

  MlpSpec spec_{};
  std::size_t offset_ = 0;
};

/// Glorot-uniform weights and zero biases from a mt19937_64 stream seeded
/// with `seed`, drawn layer by layer in row-major order.
std::pair<Mlp, ParameterVector> build_network(const MlpSpec& spec,
                                              std::uint64_t seed);

struct InputDerivatives {
  Matrix value;
  std::vector<Matrix> tangents;  // d value / d input_k for k < directions
};

/// Network output and its derivatives with respect to the first
/// `directions` input columns, via forward-mode tangents.
InputDerivatives forward_input_derivatives(const Mlp& net, const Vec& params,
                                           const Matrix& inputs,
                                           std::size_t directions);

}  // namespace piml
