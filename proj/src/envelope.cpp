#include "menv/envelope.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>

#include <nlohmann/json.hpp>

#include "menv/error.hpp"
#include "menv/nn.hpp"
#include "menv/parallel.hpp"
#include "menv/text_io.hpp"

namespace menv {

using nlohmann::json;

namespace {

constexpr int kEnvelopeFormat = 1;

// Box for the log-parameters during fitting.
constexpr double kMinLengthscale = 1e-4, kMaxLengthscale = 1e2;
constexpr double kMinOutputscale = 1e-10, kMaxOutputscale = 1e6;
constexpr double kMinNoise = 1e-6, kMaxNoise = 1e6;
constexpr double kVarianceFloor = 1e-6;

// Cholesky of a + jitter*I, escalating jitter from 1e-8 to 1e-4.
double factorize(const Eigen::MatrixXd& a, Eigen::LLT<Eigen::MatrixXd>& llt) {
  llt.compute(a);
  if (llt.info() == Eigen::Success) return 0.0;
  for (double jitter = 1e-8; jitter <= 1e-4 * 1.0000001; jitter *= 10.0) {
    Eigen::MatrixXd b = a;
    b.diagonal().array() += jitter;
    llt.compute(b);
    if (llt.info() == Eigen::Success) return jitter;
  }
  throw NumericError("GP covariance is not positive definite even with jitter 1e-4");
}

void check_training_data(const std::vector<double>& times, const Eigen::MatrixXd& targets) {
  if (targets.rows() < 1 || targets.cols() < 1) throw InvalidArgument("GP needs at least one target series");
  if (static_cast<std::size_t>(targets.cols()) != times.size())
    throw InvalidArgument("GP targets have " + std::to_string(targets.cols()) + " columns for " +
                          std::to_string(times.size()) + " inputs");
  if (!targets.allFinite()) throw NumericError("GP targets contain non-finite values");
  for (double t : times)
    if (!std::isfinite(t)) throw InvalidArgument("GP inputs must be finite");
}

Eigen::VectorXd replicate_mean(const Eigen::MatrixXd& targets) { return targets.colwise().mean().transpose(); }

Eigen::MatrixXd squared_distances(const std::vector<double>& t) {
  const auto n = static_cast<Eigen::Index>(t.size());
  Eigen::MatrixXd d(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      const double diff = t[static_cast<std::size_t>(i)] - t[static_cast<std::size_t>(j)];
      d(i, j) = diff * diff;
    }
  return d;
}

}  // namespace

void GpHyperparams::check() const {
  for (double v : {lengthscale, outputscale, noise})
    if (!std::isfinite(v) || v <= 0.0) throw InvalidArgument("GP hyperparameters must be finite and positive");
}

void GpConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("gp.lr must be positive");
  if (!(loss_tolerance > 0.0)) throw ConfigError("gp.loss_tolerance must be positive");
  if (max_iters < 1) throw ConfigError("gp.max_iters must be >= 1");
  if (!(prior.shape > 0.0) || !(prior.rate > 0.0)) throw ConfigError("gp prior parameters must be positive");
  if (!(init_lengthscale > 0.0)) throw ConfigError("gp.init_lengthscale must be positive");
  if (!(init_noise_ratio > 0.0)) throw ConfigError("gp.init_noise_ratio must be positive");
}

json to_json(const GpConfig& c) {
  return json{{"lr", c.lr},
              {"loss_tolerance", c.loss_tolerance},
              {"max_iters", c.max_iters},
              {"prior_shape", c.prior.shape},
              {"prior_rate", c.prior.rate},
              {"init_lengthscale", c.init_lengthscale},
              {"init_noise_ratio", c.init_noise_ratio},
              {"normalize_time", c.normalize_time}};
}

GpConfig gp_config_from_json(const json& j, GpConfig c) {
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "lr") c.lr = value.get<double>();
      else if (key == "loss_tolerance") c.loss_tolerance = value.get<double>();
      else if (key == "max_iters") c.max_iters = json_count(value, "gp.max_iters");
      else if (key == "prior_shape") c.prior.shape = value.get<double>();
      else if (key == "prior_rate") c.prior.rate = value.get<double>();
      else if (key == "init_lengthscale") c.init_lengthscale = value.get<double>();
      else if (key == "init_noise_ratio") c.init_noise_ratio = value.get<double>();
      else if (key == "normalize_time") c.normalize_time = value.get<bool>();
      else throw ConfigError("unknown gp option '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid gp config: ") + e.what());
  }
  c.validate();
  return c;
}

double rbf_kernel(double t, double u, const GpHyperparams& hp) {
  const double d = t - u;
  return hp.outputscale * std::exp(-d * d / (2.0 * hp.lengthscale * hp.lengthscale));
}

Eigen::MatrixXd kernel_matrix(const std::vector<double>& a, const std::vector<double>& b, const GpHyperparams& hp) {
  Eigen::MatrixXd k(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rbf_kernel(a[i], b[j], hp);
  return k;
}

std::vector<double> time_grid(std::size_t n, bool normalize) {
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i)
    t[i] = (normalize && n > 1) ? static_cast<double>(i) / static_cast<double>(n - 1) : static_cast<double>(i);
  if (normalize && n == 1) t[0] = 0.0;
  return t;
}

double lengthscale_prior_nll(double lengthscale, const GpPrior& prior) {
  const double a = prior.shape, b = prior.rate;
  return -(a * std::log(b) - std::lgamma(a) + (a - 1.0) * std::log(lengthscale) - b * lengthscale);
}

GpObjective gp_objective(const std::vector<double>& times, const Eigen::MatrixXd& targets, const GpHyperparams& hp,
                         const GpPrior& prior, bool include_prior) {
  check_training_data(times, targets);
  hp.check();
  const double k = static_cast<double>(targets.rows());
  const auto t_len = static_cast<Eigen::Index>(times.size());
  const double n = k * static_cast<double>(t_len);
  const double noise = hp.noise;

  // With every series on the same grid the N x N covariance is
  // (1 1^T) kron K_t + noise I. Its inverse and determinant split into the
  // replicate-mean block A = K*K_t + noise I and K-1 copies of noise I.
  const Eigen::VectorXd ybar = replicate_mean(targets);
  const double resid = (targets.rowwise() - ybar.transpose()).squaredNorm();
  const Eigen::MatrixXd d2 = squared_distances(times);
  const Eigen::MatrixXd kt = kernel_matrix(times, times, hp);
  Eigen::MatrixXd a = k * kt;
  a.diagonal().array() += noise;
  Eigen::LLT<Eigen::MatrixXd> llt;
  factorize(a, llt);
  const Eigen::VectorXd beta = llt.solve(ybar);
  const double logdet_a = 2.0 * llt.matrixLLT().diagonal().array().log().sum();

  GpObjective obj;
  obj.value = 0.5 * (k * ybar.dot(beta) + resid / noise) +
              0.5 * (logdet_a + (k - 1.0) * static_cast<double>(t_len) * std::log(noise)) +
              0.5 * n * std::log(2.0 * std::numbers::pi);

  Eigen::MatrixXd w = llt.solve(Eigen::MatrixXd::Identity(t_len, t_len));
  w.noalias() -= k * beta * beta.transpose();
  const Eigen::MatrixXd da_ds = k * kt;
  const Eigen::MatrixXd da_dl = da_ds.cwiseProduct(d2) / (hp.lengthscale * hp.lengthscale);
  obj.grad[0] = 0.5 * w.cwiseProduct(da_dl).sum();
  obj.grad[1] = 0.5 * w.cwiseProduct(da_ds).sum();
  obj.grad[2] = 0.5 * noise * w.trace() - resid / (2.0 * noise) + 0.5 * (k - 1.0) * static_cast<double>(t_len);

  if (include_prior) {
    obj.value += lengthscale_prior_nll(hp.lengthscale, prior);
    obj.grad[0] += -(prior.shape - 1.0) + prior.rate * hp.lengthscale;
  }
  return obj;
}

GpModel::GpModel(std::vector<double> times, Eigen::MatrixXd targets, GpHyperparams hp, GpPrior prior)
    : times_(std::move(times)), targets_(std::move(targets)), hp_(hp), prior_(prior) {
  check_training_data(times_, targets_);
  hp_.check();
  Eigen::MatrixXd a = static_cast<double>(targets_.rows()) * kernel_matrix(times_, times_, hp_);
  a.diagonal().array() += hp_.noise;
  jitter_ = factorize(a, chol_);
  beta_ = chol_.solve(replicate_mean(targets_));
}

double GpModel::negative_mll(bool include_prior) const {
  return gp_objective(times_, targets_, hp_, prior_, include_prior).value;
}

GpPosterior GpModel::posterior(const std::vector<double>& t_star) const {
  const double k = static_cast<double>(targets_.rows());
  const Eigen::MatrixXd ks = kernel_matrix(t_star, times_, hp_);
  const Eigen::MatrixXd v = chol_.solve(ks.transpose());
  GpPosterior p;
  p.mean = k * (ks * beta_);
  p.var_f = (hp_.outputscale - k * ks.cwiseProduct(v.transpose()).rowwise().sum().array()).cwiseMax(0.0);
  p.var_pred = p.var_f.array() + hp_.noise;
  return p;
}

double GpModel::training_residual() const {
  const double k = static_cast<double>(targets_.rows());
  const double noise = hp_.noise + jitter_;
  const Eigen::VectorXd ybar = replicate_mean(targets_);
  // Per-series weights alpha_k = beta + (y_k - ybar) / noise; their sum is K*beta.
  const Eigen::VectorXd shared = kernel_matrix(times_, times_, hp_) * (k * beta_);
  double worst = 0.0;
  for (Eigen::Index r = 0; r < targets_.rows(); ++r) {
    const Eigen::VectorXd y = targets_.row(r).transpose();
    const Eigen::VectorXd alpha = beta_ + (y - ybar) / noise;
    worst = std::max(worst, (shared + noise * alpha - y).cwiseAbs().maxCoeff());
  }
  return worst;
}

GpModel fit_gp(const std::vector<double>& times, const Eigen::MatrixXd& targets, const GpConfig& config,
               GpFitTrace* trace) {
  config.validate();
  check_training_data(times, targets);
  if (targets.size() < 2) throw InvalidArgument("GP fit needs at least two points");
  if (config.normalize_time)
    for (double t : times)
      if (t < 0.0 || t > 1.0) throw InvalidArgument("GP inputs must lie in [0, 1]");

  const double mean = targets.mean();
  double variance = (targets.array() - mean).square().mean();
  variance = std::max(variance, kVarianceFloor);

  std::array<double, 3> theta{std::log(config.init_lengthscale), std::log(variance),
                              std::log(std::max(config.init_noise_ratio * variance, kMinNoise))};
  const std::array<double, 3> lo{std::log(kMinLengthscale), std::log(kMinOutputscale), std::log(kMinNoise)};
  const std::array<double, 3> hi{std::log(kMaxLengthscale), std::log(kMaxOutputscale), std::log(kMaxNoise)};
  auto params = [&](const std::array<double, 3>& th) {
    return GpHyperparams{std::exp(th[0]), std::exp(th[1]), std::exp(th[2])};
  };

  nn::AdamState adam;
  adam.lr = config.lr;
  std::array<double, 3> grad{};
  const nn::ParamBlock block{"gp_log_hyperparams", std::span<double>(theta), std::span<const double>(grad)};

  GpFitTrace local;
  GpFitTrace& tr = trace ? *trace : local;
  tr = GpFitTrace{};
  std::array<double, 3> best_theta = theta;
  double best = std::numeric_limits<double>::infinity();
  double prev = 0.0;
  for (std::size_t iter = 0; iter < config.max_iters; ++iter) {
    const GpObjective obj = gp_objective(times, targets, params(theta), config.prior, true);
    if (!std::isfinite(obj.value))
      throw NumericError("GP objective became non-finite at iteration " + std::to_string(iter));
    tr.losses.push_back(obj.value);
    if (obj.value < best) {
      best = obj.value;
      best_theta = theta;
    }
    tr.best_losses.push_back(best);
    tr.iterations = iter + 1;
    if (iter > 0 && std::abs(obj.value - prev) < config.loss_tolerance) {
      tr.converged = true;
      break;
    }
    prev = obj.value;
    grad = obj.grad;
    nn::adam_step(std::span<const nn::ParamBlock>(&block, 1), adam);
    for (std::size_t i = 0; i < 3; ++i) theta[i] = std::clamp(theta[i], lo[i], hi[i]);
  }
  return GpModel(times, targets, params(best_theta), config.prior);
}

EnvelopeGrid envelope_grid(const MotionEnvelope& envelope) {
  const auto t_len = static_cast<Eigen::Index>(envelope.length);
  const auto dims = static_cast<Eigen::Index>(envelope.models.size());
  EnvelopeGrid g{Eigen::MatrixXd(t_len, dims), Eigen::MatrixXd(t_len, dims), Eigen::MatrixXd(t_len, dims)};
  for (Eigen::Index d = 0; d < dims; ++d) {
    const GpModel& m = envelope.models[static_cast<std::size_t>(d)];
    GpPosterior p = m.posterior(m.times());
    g.mean.col(d) = p.mean;
    g.var_f.col(d) = p.var_f;
    g.var_pred.col(d) = p.var_pred;
  }
  return g;
}

Eigen::MatrixXd reference_trajectory(const MotionEnvelope& envelope) {
  auto it = std::find(envelope.native_signers.begin(), envelope.native_signers.end(), envelope.reference_signer);
  if (it == envelope.native_signers.end())
    throw InvalidArgument("reference '" + envelope.reference_signer + "' is not among the envelope natives");
  const auto row = static_cast<Eigen::Index>(it - envelope.native_signers.begin());
  Eigen::MatrixXd out(static_cast<Eigen::Index>(envelope.length), static_cast<Eigen::Index>(envelope.dims()));
  for (std::size_t d = 0; d < envelope.dims(); ++d)
    out.col(static_cast<Eigen::Index>(d)) = envelope.models[d].targets().row(row).transpose();
  return out;
}

std::pair<double, double> confidence_region(double mean, double variance, double z) {
  const double half = z * std::sqrt(std::max(variance, 0.0));
  return {mean - half, mean + half};
}

MotionEnvelope fit_envelope(const std::string& sentence_id, const std::string& reference_signer,
                            const std::vector<const AlignedLatentSequence*>& natives, const GpConfig& config,
                            std::size_t jobs, std::vector<GpFitTrace>* traces) {
  config.validate();
  if (natives.size() < 3)
    throw InvalidArgument("sentence '" + sentence_id + "' needs at least 3 aligned natives, got " +
                          std::to_string(natives.size()));
  const std::size_t t_len = natives.front()->length();
  const auto dims = natives.front()->mu.cols();
  for (const auto* s : natives)
    if (s->length() != t_len || s->mu.cols() != dims)
      throw InvalidArgument("natives of sentence '" + sentence_id + "' are not aligned to a common grid");
  if (t_len < 2) throw InvalidArgument("envelope grid needs at least two frames");

  MotionEnvelope env;
  env.sentence_id = sentence_id;
  env.reference_signer = reference_signer;
  env.length = t_len;
  for (const auto* s : natives) env.native_signers.push_back(s->signer_id);
  const std::vector<double> times = time_grid(t_len, config.normalize_time);

  env.models.resize(static_cast<std::size_t>(dims));
  std::vector<GpFitTrace> local(static_cast<std::size_t>(dims));
  parallel_for(static_cast<std::size_t>(dims), jobs, [&](std::size_t d) {
    Eigen::MatrixXd y(static_cast<Eigen::Index>(natives.size()), static_cast<Eigen::Index>(t_len));
    for (std::size_t k = 0; k < natives.size(); ++k)
      y.row(static_cast<Eigen::Index>(k)) = natives[k]->mu.col(static_cast<Eigen::Index>(d)).transpose();
    env.models[d] = fit_gp(times, y, config, &local[d]);
  });
  if (traces) *traces = std::move(local);
  return env;
}

json to_json(const MotionEnvelope& env) {
  json dims = json::array();
  for (const auto& m : env.models) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.targets().rows(); ++r) {
      std::vector<double> row(static_cast<std::size_t>(m.targets().cols()));
      for (Eigen::Index c = 0; c < m.targets().cols(); ++c) row[static_cast<std::size_t>(c)] = m.targets()(r, c);
      rows.push_back(row);
    }
    dims.push_back(json{{"hyperparams",
                         {{"lengthscale", m.hyperparams().lengthscale},
                          {"outputscale", m.hyperparams().outputscale},
                          {"noise", m.hyperparams().noise}}},
                        {"prior", {{"shape", m.prior().shape}, {"rate", m.prior().rate}}},
                        {"targets", rows}});
  }
  return json{{"format_version", kEnvelopeFormat},
              {"kind", "motion_envelope"},
              {"sentence", env.sentence_id},
              {"reference_signer", env.reference_signer},
              {"length", env.length},
              {"native_signers", env.native_signers},
              {"times", env.models.empty() ? std::vector<double>{} : env.models.front().times()},
              {"dimensions", dims}};
}

MotionEnvelope envelope_from_json(const json& j) {
  try {
    if (j.at("format_version").get<int>() != kEnvelopeFormat) throw ParseError("unsupported envelope format_version");
    MotionEnvelope env;
    env.sentence_id = j.at("sentence").get<std::string>();
    env.reference_signer = j.at("reference_signer").get<std::string>();
    env.length = j.at("length").get<std::size_t>();
    env.native_signers = j.at("native_signers").get<std::vector<std::string>>();
    auto times = j.at("times").get<std::vector<double>>();
    if (times.size() != env.length) throw ParseError("envelope times do not match its length");
    for (const auto& d : j.at("dimensions")) {
      const auto& h = d.at("hyperparams");
      GpHyperparams hp{h.at("lengthscale").get<double>(), h.at("outputscale").get<double>(),
                       h.at("noise").get<double>()};
      GpPrior prior{d.at("prior").at("shape").get<double>(), d.at("prior").at("rate").get<double>()};
      auto rows = d.at("targets").get<std::vector<std::vector<double>>>();
      if (rows.size() != env.native_signers.size()) throw ParseError("envelope target rows do not match natives");
      Eigen::MatrixXd y(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(env.length));
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != env.length) throw ParseError("envelope target row has the wrong length");
        for (std::size_t c = 0; c < env.length; ++c)
          y(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
      }
      try {
        env.models.emplace_back(times, std::move(y), hp, prior);
      } catch (const InvalidArgument& e) {
        throw ParseError(std::string("invalid envelope dimension: ") + e.what());
      }
    }
    if (env.models.empty()) throw ParseError("envelope has no dimensions");
    return env;
  } catch (const json::exception& e) {
    throw ParseError(std::string("invalid envelope: ") + e.what());
  }
}

void save_envelope(const MotionEnvelope& envelope, const std::filesystem::path& path) {
  write_text_file(path, to_json(envelope).dump() + "\n");
}

MotionEnvelope load_envelope(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return envelope_from_json(j);
}

}  // namespace menv
