#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "menv/nn.hpp"
#include "menv/skeleton_io.hpp"

namespace menv {

struct VaeConfig {
  std::size_t input_dim = kPoseDim;
  std::vector<std::size_t> hidden{100, 50};
  std::size_t latent_dim = 10;
  double alpha = 0.9;   // hand share of the reconstruction loss
  double beta = 1e-4;   // KLD weight
  double lr = 1e-3;
  std::size_t batch_size = 32;
  std::size_t epochs = 2000;
  double noise_scale = 1e-3;  // multiplies the sampled reparameterization noise
  std::uint64_t seed = 0;

  // Throws ConfigError on out-of-range values.
  void validate() const;
};

nlohmann::json to_json(const VaeConfig& config);
VaeConfig vae_config_from_json(const nlohmann::json& j, VaeConfig defaults = {});

struct LatentFrame {
  Eigen::VectorXd mu;
  Eigen::VectorXd logvar;
};

// Encoder outputs for one production; row t is frame t.
struct LatentSequence {
  std::string sentence_id;
  std::string signer_id;
  Eigen::MatrixXd mu;
  Eigen::MatrixXd logvar;

  std::size_t length() const { return static_cast<std::size_t>(mu.rows()); }
  std::size_t dims() const { return static_cast<std::size_t>(mu.cols()); }
};

using LatentCorpus = std::map<EntryKey, LatentSequence>;

// Encoder trunk (ReLU) feeding two linear heads; decoder mirrors the trunk
// with a 6*tanh output layer.
struct VaeModel {
  VaeConfig config;
  std::vector<nn::DenseLayer> encoder;
  nn::DenseLayer mean_head;
  nn::DenseLayer logvar_head;
  std::vector<nn::DenseLayer> decoder;

  static VaeModel initialize(const VaeConfig& config);

  // Columns are samples.
  void encode_batch(const Eigen::MatrixXd& x, Eigen::MatrixXd& mu, Eigen::MatrixXd& logvar) const;
  Eigen::MatrixXd decode_batch(const Eigen::MatrixXd& z) const;
};

// Throws NumericError if the encoder produces non-finite values.
LatentFrame encode(const VaeModel& model, const SkeletonPose& pose);
SkeletonPose decode(const VaeModel& model, const Eigen::VectorXd& z);
// z = mu + noise_scale * exp(0.5 * logvar) * eps
Eigen::VectorXd reparameterize(const LatentFrame& frame, const Eigen::VectorXd& eps, double noise_scale);

struct VaeLoss {
  double total = 0.0;
  double l1_hands = 0.0;
  double l1_body = 0.0;
  double kld = 0.0;
};

// total = alpha * l1_hands + (1 - alpha) * l1_body + beta * kld, with L1 terms
// as mean absolute errors over each coordinate subset and the KLD taken
// against a standard-normal prior.
VaeLoss vae_loss(std::span<const double> x, std::span<const double> x_hat, std::span<const double> mu,
                 std::span<const double> logvar, const NodePartition& partition, double alpha, double beta);

struct VaeGradients {
  std::vector<nn::LayerGrad> encoder;
  nn::LayerGrad mean_head;
  nn::LayerGrad logvar_head;
  std::vector<nn::LayerGrad> decoder;
};

// Batch-mean loss for fixed reparameterization noise eps (latent_dim x B).
// When grads is non-null, fills exact gradients of the batch-mean total.
VaeLoss batch_loss(const VaeModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& eps,
                   const NodePartition& partition, VaeGradients* grads = nullptr);

// Every parameter tensor of the model paired with its gradient, in a fixed order.
std::vector<nn::ParamBlock> parameter_blocks(VaeModel& model, const VaeGradients& grads);

struct TrainResult {
  VaeModel model;
  VaeLoss initial;  // whole pool, eps = 0, before the first update
  VaeLoss final;    // whole pool, eps = 0, after the last epoch
  std::vector<VaeLoss> epoch_means;  // mean minibatch loss of each epoch
};

// poses: kPoseDim x N training pool. Batches are drawn without replacement
// each epoch from a shuffle seeded by config.seed.
TrainResult train_vae(const Eigen::MatrixXd& poses, const NodePartition& partition, const VaeConfig& config,
                      const std::function<void(std::size_t, const VaeLoss&)>& on_epoch = {});

// All frames of all native sequences, concatenated as columns.
Eigen::MatrixXd native_pose_pool(const CorpusManifest& manifest);
Eigen::MatrixXd pose_matrix(const PoseSequence& seq);

LatentSequence encode_sequence(const VaeModel& model, const PoseSequence& seq);
LatentCorpus encode_corpus(const VaeModel& model, const CorpusManifest& manifest, std::size_t jobs = 1);

nlohmann::json model_to_json(const VaeModel& model);
VaeModel model_from_json(const nlohmann::json& j);
void save_model(const VaeModel& model, const std::filesystem::path& path);
VaeModel load_model(const std::filesystem::path& path);

// Latent CSV: one row per frame, mu columns then logvar columns. Lines
// starting with '#' are comments.
std::string serialize_latents(const LatentSequence& seq, const std::string& comment = {});
void save_latents(const LatentSequence& seq, const std::filesystem::path& path, const std::string& comment = {});
LatentSequence load_latents(const std::filesystem::path& path);

}  // namespace menv
