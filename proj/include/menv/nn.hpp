#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

namespace menv::nn {

// Dense feed-forward building blocks with hand-derived reverse-mode
// gradients. Batches are matrices with one sample per column.

enum class Activation { kReLU, kTanh6, kLinear };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& text);

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd biases;   // out
  Activation activation = Activation::kLinear;

  Eigen::Index in_dim() const { return weights.cols(); }
  Eigen::Index out_dim() const { return weights.rows(); }
};

// Entries ~ Normal(0, 2 / cols).
Eigen::MatrixXd kaiming_init(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);
// All entries 0.01.
Eigen::VectorXd bias_init(Eigen::Index n);

DenseLayer make_layer(Eigen::Index in, Eigen::Index out, Activation act, std::mt19937_64& rng);

// Intermediates recorded by forward() for one stack of layers.
struct Tape {
  std::vector<Eigen::MatrixXd> inputs;  // input of layer i
  std::vector<Eigen::MatrixXd> outputs;  // post-activation output of layer i
};

Eigen::MatrixXd forward(std::span<const DenseLayer> layers, const Eigen::MatrixXd& x, Tape* tape = nullptr);

struct LayerGrad {
  Eigen::MatrixXd weights;
  Eigen::VectorXd biases;
};

struct Gradients {
  std::vector<LayerGrad> layers;
  Eigen::MatrixXd input;
};

// Gradients of a scalar loss given dLoss/dOutput for the recorded batch.
Gradients backward(std::span<const DenseLayer> layers, const Tape& tape, const Eigen::MatrixXd& d_output);

// A named view onto one parameter tensor and its gradient, flattened.
struct ParamBlock {
  std::string name;
  std::span<double> value;
  std::span<const double> grad;
};

struct AdamState {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step_count = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

// Bias-corrected Adam update. Moments are sized on the first call; later
// calls must pass blocks of identical shape. Throws NumericError naming the
// block if a gradient is non-finite (parameters are left untouched).
void adam_step(std::span<const ParamBlock> blocks, AdamState& state);

nlohmann::json layer_to_json(const DenseLayer& layer);
DenseLayer layer_from_json(const nlohmann::json& j);

}  // namespace menv::nn
