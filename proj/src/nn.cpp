#include "menv/nn.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "menv/error.hpp"

namespace menv::nn {

using nlohmann::json;

const char* to_string(Activation a) {
  switch (a) {
    case Activation::kReLU: return "relu";
    case Activation::kTanh6: return "tanh6";
    case Activation::kLinear: return "linear";
  }
  return "linear";
}

Activation activation_from_string(const std::string& text) {
  if (text == "relu") return Activation::kReLU;
  if (text == "tanh6") return Activation::kTanh6;
  if (text == "linear") return Activation::kLinear;
  throw ParseError("unknown activation '" + text + "'");
}

Eigen::MatrixXd kaiming_init(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  if (rows < 1 || cols < 1) throw InvalidArgument("kaiming_init needs rows, cols >= 1");
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(cols)));
  Eigen::MatrixXd w(rows, cols);
  // Row-major fill order so the stream maps onto the serialized layout.
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) w(r, c) = normal(rng);
  return w;
}

Eigen::VectorXd bias_init(Eigen::Index n) { return Eigen::VectorXd::Constant(n, 0.01); }

DenseLayer make_layer(Eigen::Index in, Eigen::Index out, Activation act, std::mt19937_64& rng) {
  return DenseLayer{kaiming_init(out, in, rng), bias_init(out), act};
}

namespace {

void activate(Activation act, Eigen::MatrixXd& m) {
  switch (act) {
    case Activation::kReLU: m = m.cwiseMax(0.0); break;
    case Activation::kTanh6: m = 6.0 * m.array().tanh(); break;
    case Activation::kLinear: break;
  }
}

}  // namespace

Eigen::MatrixXd forward(std::span<const DenseLayer> layers, const Eigen::MatrixXd& x, Tape* tape) {
  if (tape) {
    tape->inputs.clear();
    tape->outputs.clear();
  }
  Eigen::MatrixXd h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& layer = layers[i];
    if (h.rows() != layer.in_dim())
      throw InvalidArgument("layer " + std::to_string(i) + " expects " + std::to_string(layer.in_dim()) +
                            " inputs, got " + std::to_string(h.rows()));
    Eigen::MatrixXd a = layer.weights * h;
    a.colwise() += layer.biases;
    activate(layer.activation, a);
    if (tape) {
      tape->inputs.push_back(std::move(h));
      tape->outputs.push_back(a);
    }
    h = std::move(a);
  }
  return h;
}

Gradients backward(std::span<const DenseLayer> layers, const Tape& tape, const Eigen::MatrixXd& d_output) {
  if (tape.inputs.size() != layers.size() || tape.outputs.size() != layers.size())
    throw InvalidArgument("tape does not match the layer stack");
  Gradients g;
  g.layers.resize(layers.size());
  Eigen::MatrixXd delta = d_output;
  for (std::size_t idx = layers.size(); idx-- > 0;) {
    const auto& layer = layers[idx];
    const auto& out = tape.outputs[idx];
    if (delta.rows() != out.rows() || delta.cols() != out.cols())
      throw InvalidArgument("gradient shape mismatch at layer " + std::to_string(idx));
    switch (layer.activation) {
      case Activation::kReLU:
        // Derivative at exactly zero is taken as zero.
        delta = (out.array() > 0.0).select(delta, 0.0);
        break;
      case Activation::kTanh6:
        delta = delta.array() * (6.0 - out.array().square() / 6.0);
        break;
      case Activation::kLinear: break;
    }
    g.layers[idx].weights.noalias() = delta * tape.inputs[idx].transpose();
    g.layers[idx].biases = delta.rowwise().sum();
    Eigen::MatrixXd next = layer.weights.transpose() * delta;
    delta = std::move(next);
  }
  g.input = std::move(delta);
  return g;
}

void adam_step(std::span<const ParamBlock> blocks, AdamState& state) {
  if (state.first_moment.empty()) {
    for (const auto& b : blocks) {
      state.first_moment.emplace_back(b.value.size(), 0.0);
      state.second_moment.emplace_back(b.value.size(), 0.0);
    }
  }
  if (state.first_moment.size() != blocks.size()) throw InvalidArgument("adam_step: parameter block count changed");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    if (b.value.size() != b.grad.size() || b.value.size() != state.first_moment[i].size())
      throw InvalidArgument("adam_step: shape mismatch for '" + b.name + "'");
    for (double gv : b.grad)
      if (!std::isfinite(gv)) throw NumericError("adam_step: non-finite gradient in '" + b.name + "'");
  }
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const double lr = state.lr;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    const auto n = static_cast<Eigen::Index>(b.value.size());
    Eigen::Map<Eigen::ArrayXd> m(state.first_moment[i].data(), n);
    Eigen::Map<Eigen::ArrayXd> v(state.second_moment[i].data(), n);
    Eigen::Map<Eigen::ArrayXd> p(b.value.data(), n);
    Eigen::Map<const Eigen::ArrayXd> g(b.grad.data(), n);
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.square();
    p -= lr * (m / c1) / ((v / c2).sqrt() + state.epsilon);
  }
}

json layer_to_json(const DenseLayer& layer) {
  std::vector<double> w;
  w.reserve(static_cast<std::size_t>(layer.weights.size()));
  for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
    for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) w.push_back(layer.weights(r, c));
  std::vector<double> b(layer.biases.data(), layer.biases.data() + layer.biases.size());
  return json{{"in", layer.in_dim()},
              {"out", layer.out_dim()},
              {"activation", to_string(layer.activation)},
              {"weights", w},
              {"biases", b}};
}

DenseLayer layer_from_json(const json& j) {
  try {
    auto in = j.at("in").get<Eigen::Index>();
    auto out = j.at("out").get<Eigen::Index>();
    auto w = j.at("weights").get<std::vector<double>>();
    auto b = j.at("biases").get<std::vector<double>>();
    if (in < 1 || out < 1 || static_cast<Eigen::Index>(w.size()) != in * out ||
        static_cast<Eigen::Index>(b.size()) != out)
      throw ParseError("layer parameter arrays do not match the declared shape");
    DenseLayer layer;
    layer.activation = activation_from_string(j.at("activation").get<std::string>());
    layer.weights.resize(out, in);
    for (Eigen::Index r = 0; r < out; ++r)
      for (Eigen::Index c = 0; c < in; ++c) layer.weights(r, c) = w[static_cast<std::size_t>(r * in + c)];
    layer.biases = Eigen::Map<const Eigen::VectorXd>(b.data(), out);
    for (double v : w)
      if (!std::isfinite(v)) throw ParseError("non-finite layer weight");
    return layer;
  } catch (const json::exception& e) {
    throw ParseError(std::string("invalid layer: ") + e.what());
  }
}

}  // namespace menv::nn
