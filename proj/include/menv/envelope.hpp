#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "menv/alignment.hpp"

namespace menv {

struct GpHyperparams {
  double lengthscale = 0.2;
  double outputscale = 1.0;
  double noise = 0.05;

  // Throws InvalidArgument unless every field is finite and > 0.
  void check() const;
};

// Gamma(shape, rate) prior on the lengthscale.
struct GpPrior {
  double shape = 0.1;
  double rate = 0.1;
};

struct GpConfig {
  double lr = 0.1;
  double loss_tolerance = 1e-3;  // stop once successive losses differ by less
  std::size_t max_iters = 2000;
  GpPrior prior;
  double init_lengthscale = 0.2;
  double init_noise_ratio = 0.05;  // initial noise as a share of target variance
  bool normalize_time = true;

  void validate() const;
};

nlohmann::json to_json(const GpConfig& config);
GpConfig gp_config_from_json(const nlohmann::json& j, GpConfig defaults = {});

double rbf_kernel(double t, double u, const GpHyperparams& hp);
Eigen::MatrixXd kernel_matrix(const std::vector<double>& a, const std::vector<double>& b, const GpHyperparams& hp);

// Grid 0..n-1, optionally mapped onto [0, 1].
std::vector<double> time_grid(std::size_t n, bool normalize);

// -log Gamma(l; shape, rate)
double lengthscale_prior_nll(double lengthscale, const GpPrior& prior);

// Objective value and its gradient with respect to
// (log lengthscale, log outputscale, log noise).
struct GpObjective {
  double value = 0.0;
  std::array<double, 3> grad{};
};

// Negative log marginal likelihood of K replicated series observed on a shared
// grid (targets is K x T, one row per series). The joint covariance over all
// N = K*T points is exploited through its replicate structure, which gives the
// exact dense result at O(T^3) cost. include_prior adds the lengthscale prior.
GpObjective gp_objective(const std::vector<double>& times, const Eigen::MatrixXd& targets, const GpHyperparams& hp,
                         const GpPrior& prior, bool include_prior = true);

struct GpPosterior {
  Eigen::VectorXd mean;
  Eigen::VectorXd var_f;
  Eigen::VectorXd var_pred;
};

class GpModel {
 public:
  GpModel() = default;
  // Factorizes immediately; throws NumericError if the jitter ladder fails.
  GpModel(std::vector<double> times, Eigen::MatrixXd targets, GpHyperparams hp, GpPrior prior = {});

  const std::vector<double>& times() const { return times_; }
  const Eigen::MatrixXd& targets() const { return targets_; }
  const GpHyperparams& hyperparams() const { return hp_; }
  const GpPrior& prior() const { return prior_; }
  std::size_t replicates() const { return static_cast<std::size_t>(targets_.rows()); }
  std::size_t point_count() const { return static_cast<std::size_t>(targets_.size()); }
  double jitter() const { return jitter_; }

  double negative_mll(bool include_prior = true) const;
  GpPosterior posterior(const std::vector<double>& t_star) const;

  // max |(K_N + noise I) alpha - y| over all N training points.
  double training_residual() const;

 private:
  std::vector<double> times_;
  Eigen::MatrixXd targets_;
  GpHyperparams hp_;
  GpPrior prior_;
  double jitter_ = 0.0;
  Eigen::LLT<Eigen::MatrixXd> chol_;  // of K * K_t + noise I
  Eigen::VectorXd beta_;              // solve against the replicate mean
};

struct GpFitTrace {
  std::vector<double> losses;        // objective before each update
  std::vector<double> best_losses;   // running minimum, one per iteration
  std::size_t iterations = 0;
  bool converged = false;
};

// Adam on the log-hyperparameters. The returned model carries the parameters
// with the lowest objective visited.
GpModel fit_gp(const std::vector<double>& times, const Eigen::MatrixXd& targets, const GpConfig& config,
               GpFitTrace* trace = nullptr);

struct MotionEnvelope {
  std::string sentence_id;
  std::string reference_signer;
  std::size_t length = 0;
  std::vector<std::string> native_signers;
  std::vector<GpModel> models;  // one per latent dimension

  std::size_t dims() const { return models.size(); }
};

// Posterior of every dimension over the envelope grid; rows are time.
struct EnvelopeGrid {
  Eigen::MatrixXd mean;
  Eigen::MatrixXd var_f;
  Eigen::MatrixXd var_pred;
};

EnvelopeGrid envelope_grid(const MotionEnvelope& envelope);

// Latent means of the reference native (the alignment target), T x dims.
Eigen::MatrixXd reference_trajectory(const MotionEnvelope& envelope);

std::pair<double, double> confidence_region(double mean, double variance, double z = 1.96);

// Needs >= 3 natives, all aligned to the same length.
MotionEnvelope fit_envelope(const std::string& sentence_id, const std::string& reference_signer,
                            const std::vector<const AlignedLatentSequence*>& natives, const GpConfig& config,
                            std::size_t jobs = 1, std::vector<GpFitTrace>* traces = nullptr);

nlohmann::json to_json(const MotionEnvelope& envelope);
MotionEnvelope envelope_from_json(const nlohmann::json& j);
void save_envelope(const MotionEnvelope& envelope, const std::filesystem::path& path);
MotionEnvelope load_envelope(const std::filesystem::path& path);

}  // namespace menv
