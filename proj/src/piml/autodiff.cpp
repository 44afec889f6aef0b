#include "piml/autodiff.hpp"

#include <cmath>
#include <string>

#include "piml/error.hpp"

namespace piml {

namespace {

using RowMajor =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

bool is_scalar(const Matrix& m) { return m.rows() == 1 && m.cols() == 1; }

// Reduces an adjoint to the shape of a (possibly broadcast) operand.
Matrix reduce_to(const Matrix& adjoint, const Matrix& operand) {
  if (is_scalar(operand) && !is_scalar(adjoint)) {
    return Matrix::Constant(1, 1, adjoint.sum());
  }
  return adjoint;
}

void accumulate(Matrix& slot, const Matrix& contribution) {
  if (slot.size() == 0) {
    slot = contribution;
  } else {
    slot += contribution;
  }
}

}  // namespace

NodeId Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return static_cast<NodeId>(nodes_.size() - 1);
}

const Tape::Node& Tape::node(NodeId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
    fail_validation("invalid tape node " + std::to_string(id));
  }
  return nodes_[static_cast<std::size_t>(id)];
}

const Matrix& Tape::value(NodeId id) const { return node(id).value; }

double Tape::scalar_value(NodeId id) const {
  const auto& v = value(id);
  if (!is_scalar(v)) fail_validation("node is not a scalar");
  return v(0, 0);
}

NodeId Tape::constant(Matrix value) {
  return push({.op = Op::constant, .value = std::move(value)});
}

NodeId Tape::scalar(double value) {
  return constant(Matrix::Constant(1, 1, value));
}

NodeId Tape::parameter(const Vec& params, std::size_t offset,
                       Eigen::Index rows, Eigen::Index cols) {
  const auto count = static_cast<std::size_t>(rows * cols);
  if (offset + count > static_cast<std::size_t>(params.size())) {
    fail_validation("parameter slice out of range");
  }
  Matrix value = Eigen::Map<const RowMajor>(params.data() + offset, rows, cols);
  return push({.op = Op::parameter, .offset = offset, .value = std::move(value)});
}

NodeId Tape::affine(NodeId x, NodeId w, NodeId b) {
  const auto& xv = value(x);
  const auto& wv = value(w);
  if (xv.cols() != wv.cols()) fail_validation("affine: input width mismatch");
  Matrix out = xv * wv.transpose();
  if (b != kNoNode) {
    const auto& bv = value(b);
    if (bv.rows() != 1 || bv.cols() != wv.rows()) {
      fail_validation("affine: bias shape mismatch");
    }
    out.rowwise() += bv.row(0);
  }
  return push({.op = Op::affine, .a = x, .b = w, .c = b, .value = std::move(out)});
}

NodeId Tape::tanh(NodeId a) {
  Matrix out = value(a).array().tanh().matrix();
  return push({.op = Op::tanh, .a = a, .value = std::move(out)});
}

Matrix Tape::broadcast_binary(Op op, NodeId a, NodeId b) const {
  const auto& av = value(a);
  const auto& bv = value(b);
  const auto apply = [op](const auto& x, const auto& y) -> Matrix {
    switch (op) {
      case Op::add: return (x + y).matrix();
      case Op::sub: return (x - y).matrix();
      case Op::mul: return (x * y).matrix();
      default: return {};
    }
  };
  if (av.rows() == bv.rows() && av.cols() == bv.cols()) {
    return apply(av.array(), bv.array());
  }
  if (is_scalar(bv)) {
    return apply(av.array(), Matrix::Constant(av.rows(), av.cols(), bv(0, 0)).array());
  }
  if (is_scalar(av)) {
    return apply(Matrix::Constant(bv.rows(), bv.cols(), av(0, 0)).array(), bv.array());
  }
  fail_validation("elementwise shape mismatch");
}

NodeId Tape::add(NodeId a, NodeId b) {
  return push({.op = Op::add, .a = a, .b = b, .value = broadcast_binary(Op::add, a, b)});
}

NodeId Tape::sub(NodeId a, NodeId b) {
  return push({.op = Op::sub, .a = a, .b = b, .value = broadcast_binary(Op::sub, a, b)});
}

NodeId Tape::mul(NodeId a, NodeId b) {
  return push({.op = Op::mul, .a = a, .b = b, .value = broadcast_binary(Op::mul, a, b)});
}

NodeId Tape::div(NodeId a, NodeId b, double floor) {
  const auto& av = value(a);
  const auto& bv = value(b);
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) {
    fail_validation("div: shape mismatch");
  }
  Matrix out = (av.array() / bv.array().max(floor)).matrix();
  return push({.op = Op::div, .a = a, .b = b, .attr = floor, .value = std::move(out)});
}

NodeId Tape::pow(NodeId a, int exponent) {
  if (exponent < 1) fail_validation("pow: exponent must be a positive integer");
  Matrix out = value(a).array().pow(exponent).matrix();
  return push({.op = Op::pow, .a = a, .attr = static_cast<double>(exponent),
               .value = std::move(out)});
}

NodeId Tape::square(NodeId a) {
  Matrix out = value(a).array().square().matrix();
  return push({.op = Op::square, .a = a, .value = std::move(out)});
}

NodeId Tape::mean(NodeId a) {
  const auto& av = value(a);
  if (av.size() == 0) fail_validation("mean of an empty node");
  return push({.op = Op::mean, .a = a, .value = Matrix::Constant(1, 1, av.mean())});
}

Vec Tape::backward(NodeId output, std::size_t num_params) const {
  if (!is_scalar(value(output))) {
    fail_validation("backward requires a scalar output node");
  }
  Vec grad = Vec::Zero(static_cast<Eigen::Index>(num_params));
  std::vector<Matrix> adj(static_cast<std::size_t>(output) + 1);
  adj[static_cast<std::size_t>(output)] = Matrix::Constant(1, 1, 1.0);

  for (NodeId id = output; id >= 0; --id) {
    auto& dy = adj[static_cast<std::size_t>(id)];
    if (dy.size() == 0) continue;
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    const auto slot = [&adj](NodeId i) -> Matrix& {
      return adj[static_cast<std::size_t>(i)];
    };
    switch (n.op) {
      case Op::constant:
        break;
      case Op::parameter: {
        if (n.offset + static_cast<std::size_t>(dy.size()) > num_params) {
          fail_validation("parameter vector shorter than tape parameters");
        }
        Eigen::Map<RowMajor>(grad.data() + n.offset, dy.rows(), dy.cols()) += dy;
        break;
      }
      case Op::affine: {
        const auto& x = value(n.a);
        const auto& w = value(n.b);
        accumulate(slot(n.a), dy * w);
        accumulate(slot(n.b), dy.transpose() * x);
        if (n.c != kNoNode) accumulate(slot(n.c), dy.colwise().sum());
        break;
      }
      case Op::tanh:
        accumulate(slot(n.a),
                   (dy.array() * (1.0 - n.value.array().square())).matrix());
        break;
      case Op::add:
        accumulate(slot(n.a), reduce_to(dy, value(n.a)));
        accumulate(slot(n.b), reduce_to(dy, value(n.b)));
        break;
      case Op::sub:
        accumulate(slot(n.a), reduce_to(dy, value(n.a)));
        accumulate(slot(n.b), reduce_to(-dy, value(n.b)));
        break;
      case Op::mul: {
        const auto& av = value(n.a);
        const auto& bv = value(n.b);
        Matrix da = is_scalar(bv) ? Matrix(dy * bv(0, 0))
                                  : Matrix((dy.array() * bv.array()).matrix());
        Matrix db = is_scalar(av) ? Matrix(dy * av(0, 0))
                                  : Matrix((dy.array() * av.array()).matrix());
        accumulate(slot(n.a), reduce_to(da, av));
        accumulate(slot(n.b), reduce_to(db, bv));
        break;
      }
      case Op::div: {
        const auto& av = value(n.a);
        const auto& bv = value(n.b);
        const auto den = bv.array().max(n.attr);
        accumulate(slot(n.a), (dy.array() / den).matrix());
        const auto active = (bv.array() > n.attr).cast<double>();
        accumulate(slot(n.b),
                   (-dy.array() * av.array() / den.square() * active).matrix());
        break;
      }
      case Op::pow: {
        const int k = static_cast<int>(n.attr);
        const auto& av = value(n.a);
        Matrix local = k == 1 ? Matrix::Ones(av.rows(), av.cols())
                              : Matrix((k * av.array().pow(k - 1)).matrix());
        accumulate(slot(n.a), (dy.array() * local.array()).matrix());
        break;
      }
      case Op::square:
        accumulate(slot(n.a), (2.0 * dy.array() * value(n.a).array()).matrix());
        break;
      case Op::mean: {
        const auto& av = value(n.a);
        accumulate(slot(n.a), Matrix::Constant(av.rows(), av.cols(),
                                               dy(0, 0) / static_cast<double>(av.size())));
        break;
      }
    }
    dy.resize(0, 0);
  }
  return grad;
}

DualNode seed_inputs(Tape& tape, NodeId input, std::size_t num_directions) {
  const auto& x = tape.value(input);
  if (num_directions > static_cast<std::size_t>(x.cols())) {
    fail_validation("more tangent directions than input columns");
  }
  DualNode out{.value = input};
  for (std::size_t k = 0; k < num_directions; ++k) {
    Matrix seed = Matrix::Zero(x.rows(), x.cols());
    seed.col(static_cast<Eigen::Index>(k)).setOnes();
    out.tangents.push_back(tape.constant(std::move(seed)));
  }
  return out;
}

DualNode affine(Tape& tape, const DualNode& x, NodeId w, NodeId b) {
  DualNode out{.value = tape.affine(x.value, w, b)};
  for (const NodeId t : x.tangents) out.tangents.push_back(tape.affine(t, w, kNoNode));
  return out;
}

DualNode tanh(Tape& tape, const DualNode& a) {
  DualNode out{.value = tape.tanh(a.value)};
  if (a.tangents.empty()) return out;
  // d tanh(z) = (1 - tanh(z)^2) dz
  const NodeId slope = tape.sub(tape.scalar(1.0), tape.square(out.value));
  for (const NodeId t : a.tangents) out.tangents.push_back(tape.mul(slope, t));
  return out;
}

DualNode mul(Tape& tape, const DualNode& a, const DualNode& b) {
  if (a.tangents.size() != b.tangents.size()) fail_validation("tangent count mismatch");
  DualNode out{.value = tape.mul(a.value, b.value)};
  for (std::size_t k = 0; k < a.tangents.size(); ++k) {
    out.tangents.push_back(tape.add(tape.mul(a.tangents[k], b.value),
                                    tape.mul(a.value, b.tangents[k])));
  }
  return out;
}

}  // namespace piml
