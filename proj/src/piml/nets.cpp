#include "piml/nets.hpp"

#include <cmath>
#include <random>

#include "piml/error.hpp"

namespace piml {

void MlpSpec::validate() const {
  if (input_dim < 1 || output_dim < 1) fail_validation("network dims must be >= 1");
  if (hidden_layers < 0) fail_validation("hidden layer count must be >= 0");
  if (hidden_layers > 0 && hidden_width < 1) fail_validation("hidden width must be >= 1");
}

std::size_t MlpSpec::num_params() const {
  std::size_t total = 0;
  int in = input_dim;
  for (int l = 0; l < hidden_layers; ++l) {
    total += static_cast<std::size_t>(in * hidden_width + hidden_width);
    in = hidden_width;
  }
  return total + static_cast<std::size_t>(in * output_dim + output_dim);
}

std::size_t ParameterVector::append(const ParameterVector& other,
                                    const std::string& prefix) {
  const std::size_t base = size();
  Vec merged(values.size() + other.values.size());
  merged << values, other.values;
  values = std::move(merged);
  for (auto slot : other.layout) {
    slot.name = prefix + slot.name;
    slot.offset += base;
    layout.push_back(std::move(slot));
  }
  return base;
}

std::vector<Matrix> ParameterVector::unflatten() const {
  using RowMajor =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  std::vector<Matrix> out;
  out.reserve(layout.size());
  for (const auto& slot : layout) {
    if (slot.offset + slot.count() > size()) fail_validation("layout exceeds values");
    out.emplace_back(
        Eigen::Map<const RowMajor>(values.data() + slot.offset, slot.rows, slot.cols));
  }
  return out;
}

void ParameterVector::flatten(const std::vector<Matrix>& tensors) {
  using RowMajor =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  if (tensors.size() != layout.size()) fail_validation("tensor count mismatch");
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& slot = layout[i];
    if (tensors[i].rows() != slot.rows || tensors[i].cols() != slot.cols) {
      fail_validation("tensor shape mismatch for " + slot.name);
    }
    Eigen::Map<RowMajor>(values.data() + slot.offset, slot.rows, slot.cols) = tensors[i];
  }
}

Mlp::Mlp(MlpSpec spec, std::size_t offset) : spec_(spec), offset_(offset) {
  spec_.validate();
}

int Mlp::layer_in(int layer) const {
  return layer == 0 ? spec_.input_dim : spec_.hidden_width;
}

int Mlp::layer_out(int layer) const {
  return layer == spec_.hidden_layers ? spec_.output_dim : spec_.hidden_width;
}

std::size_t Mlp::weight_offset(int layer) const {
  std::size_t off = offset_;
  for (int l = 0; l < layer; ++l) {
    off += static_cast<std::size_t>(layer_in(l) * layer_out(l) + layer_out(l));
  }
  return off;
}

Matrix Mlp::forward(const Vec& params, const Matrix& inputs) const {
  using RowMajor =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  if (inputs.cols() != spec_.input_dim) fail_validation("network input width mismatch");
  if (offset_ + num_params() > static_cast<std::size_t>(params.size())) {
    fail_validation("parameter vector too short for network");
  }
  Matrix h = inputs;
  for (int l = 0; l < num_layers(); ++l) {
    const std::size_t off = weight_offset(l);
    const int in = layer_in(l);
    const int out = layer_out(l);
    Eigen::Map<const RowMajor> w(params.data() + off, out, in);
    Eigen::Map<const Eigen::RowVectorXd> b(params.data() + off + in * out, out);
    Matrix z = h * w.transpose();
    z.rowwise() += b;
    if (l < spec_.hidden_layers) z = z.array().tanh().matrix();
    if (!z.allFinite()) {
      fail_numerical("non-finite activation at layer " + std::to_string(l));
    }
    h = std::move(z);
  }
  return h;
}

NodeId Mlp::forward(Tape& tape, const Vec& params, NodeId input) const {
  return forward(tape, params, DualNode{.value = input}).value;
}

DualNode Mlp::forward(Tape& tape, const Vec& params, const DualNode& input) const {
  if (tape.value(input.value).cols() != spec_.input_dim) {
    fail_validation("network input width mismatch");
  }
  DualNode h = input;
  for (int l = 0; l < num_layers(); ++l) {
    const std::size_t off = weight_offset(l);
    const int in = layer_in(l);
    const int out = layer_out(l);
    const NodeId w = tape.parameter(params, off, out, in);
    const NodeId b = tape.parameter(params, off + static_cast<std::size_t>(in * out), 1, out);
    h = piml::affine(tape, h, w, b);
    if (l < spec_.hidden_layers) h = piml::tanh(tape, h);
  }
  return h;
}

std::pair<Mlp, ParameterVector> build_network(const MlpSpec& spec,
                                              std::uint64_t seed) {
  spec.validate();
  Mlp net(spec, 0);
  ParameterVector params;
  params.values = Vec::Zero(static_cast<Eigen::Index>(spec.num_params()));

  std::mt19937_64 rng(seed);
  std::size_t off = 0;
  int in = spec.input_dim;
  for (int l = 0; l <= spec.hidden_layers; ++l) {
    const int out = l == spec.hidden_layers ? spec.output_dim : spec.hidden_width;
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    params.layout.push_back({"w" + std::to_string(l), out, in, off});
    for (int i = 0; i < out * in; ++i) params.values[static_cast<Eigen::Index>(off++)] = dist(rng);
    params.layout.push_back({"b" + std::to_string(l), 1, out, off});
    off += static_cast<std::size_t>(out);
    in = out;
  }
  return {net, std::move(params)};
}

InputDerivatives forward_input_derivatives(const Mlp& net, const Vec& params,
                                           const Matrix& inputs,
                                           std::size_t directions) {
  Tape tape;
  const NodeId x = tape.constant(inputs);
  const DualNode out = net.forward(tape, params, seed_inputs(tape, x, directions));
  InputDerivatives result{.value = tape.value(out.value)};
  for (const NodeId t : out.tangents) result.tangents.push_back(tape.value(t));
  return result;
}

}  // namespace piml
