#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "piml/vecmath.hpp"

namespace piml {

using NodeId = std::int32_t;
inline constexpr NodeId kNoNode = -1;

/// Reverse-mode tape over dense matrices (rows are batch entries).
///
/// Parameter leaves are slices of one flat parameter vector; `backward`
/// returns the gradient over that whole vector, with zeros wherever a
/// parameter never reached the output. Nodes are appended in evaluation
/// order, so the node index is a topological order and the reverse sweep
/// is a plain descending loop.
///
/// Elementwise binary ops accept operands of equal shape, or one 1x1
/// operand that is broadcast.
class Tape {
 public:
  enum class Op : std::uint8_t {
    constant,
    parameter,
    affine,
    tanh,
    add,
    sub,
    mul,
    div,
    pow,
    square,
    mean,
  };

  NodeId constant(Matrix value);
  NodeId scalar(double value);

  /// Leaf holding params[offset .. offset + rows*cols) laid out row-major.
  NodeId parameter(const Vec& params, std::size_t offset, Eigen::Index rows,
                   Eigen::Index cols);

  /// x * w^T + b, with w shaped (out x in) and b (1 x out). `b` may be
  /// kNoNode for a bias-free linear map.
  NodeId affine(NodeId x, NodeId w, NodeId b);
  NodeId tanh(NodeId a);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  /// a / max(b, floor). Where the floor is active the partial in b is zero.
  NodeId div(NodeId a, NodeId b,
             double floor = -std::numeric_limits<double>::infinity());
  NodeId pow(NodeId a, int exponent);
  NodeId square(NodeId a);
  /// Mean over every entry; 1x1 result.
  NodeId mean(NodeId a);

  const Matrix& value(NodeId id) const;
  double scalar_value(NodeId id) const;
  std::size_t size() const { return nodes_.size(); }

  /// d(output)/d(params) over a parameter vector of length `num_params`.
  Vec backward(NodeId output, std::size_t num_params) const;

 private:
  struct Node {
    Op op;
    NodeId a = kNoNode;
    NodeId b = kNoNode;
    NodeId c = kNoNode;
    double attr = 0.0;  // exponent or division floor
    std::size_t offset = 0;
    Matrix value;
  };

  NodeId push(Node node);
  const Node& node(NodeId id) const;
  Matrix broadcast_binary(Op op, NodeId a, NodeId b) const;

  std::vector<Node> nodes_;
};

/// A tape value together with forward-mode tangents, one per seeded input
/// direction. Tangents are ordinary tape nodes, so reverse mode
/// differentiates through them (parameter gradients of input derivatives).
struct DualNode {
  NodeId value = kNoNode;
  std::vector<NodeId> tangents;
};

/// Seeds tangent k of an (n x d) input as the unit direction of column k.
DualNode seed_inputs(Tape& tape, NodeId input, std::size_t num_directions);

DualNode affine(Tape& tape, const DualNode& x, NodeId w, NodeId b);
DualNode tanh(Tape& tape, const DualNode& a);
DualNode mul(Tape& tape, const DualNode& a, const DualNode& b);

}  // namespace piml
