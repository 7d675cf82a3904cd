#include "menv/vae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "menv/error.hpp"
#include "menv/fp_env.hpp"
#include "menv/parallel.hpp"
#include "menv/text_io.hpp"

namespace menv {

using nlohmann::json;

void VaeConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("vae.alpha must lie in [0, 1]");
  if (!(beta >= 0.0)) throw ConfigError("vae.beta must be >= 0");
  if (latent_dim < 1) throw ConfigError("vae.latent_dim must be >= 1");
  if (input_dim != kPoseDim) throw ConfigError("vae.input_dim must be 183");
  if (hidden.empty()) throw ConfigError("vae.hidden needs at least one layer");
  for (auto h : hidden)
    if (h < 1) throw ConfigError("vae.hidden sizes must be >= 1");
  if (batch_size < 1) throw ConfigError("vae.batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("vae.lr must be > 0");
  if (!(noise_scale >= 0.0)) throw ConfigError("vae.noise_scale must be >= 0");
}

json to_json(const VaeConfig& c) {
  return json{{"input_dim", c.input_dim}, {"hidden", c.hidden},         {"latent_dim", c.latent_dim},
              {"alpha", c.alpha},         {"beta", c.beta},             {"lr", c.lr},
              {"batch_size", c.batch_size}, {"epochs", c.epochs},       {"noise_scale", c.noise_scale},
              {"seed", c.seed}};
}

VaeConfig vae_config_from_json(const json& j, VaeConfig c) {
  try {
    if (j.contains("input_dim")) c.input_dim = json_count(j.at("input_dim"), "vae.input_dim");
    if (j.contains("hidden")) {
      if (!j.at("hidden").is_array()) throw ConfigError("vae.hidden must be a list of layer widths");
      c.hidden.clear();
      for (const auto& w : j.at("hidden")) c.hidden.push_back(json_count(w, "vae.hidden"));
    }
    if (j.contains("latent_dim")) c.latent_dim = json_count(j.at("latent_dim"), "vae.latent_dim");
    if (j.contains("alpha")) c.alpha = j.at("alpha").get<double>();
    if (j.contains("beta")) c.beta = j.at("beta").get<double>();
    if (j.contains("lr")) c.lr = j.at("lr").get<double>();
    if (j.contains("batch_size")) c.batch_size = json_count(j.at("batch_size"), "vae.batch_size");
    if (j.contains("epochs")) c.epochs = json_count(j.at("epochs"), "vae.epochs");
    if (j.contains("noise_scale")) c.noise_scale = j.at("noise_scale").get<double>();
    if (j.contains("seed")) c.seed = json_count(j.at("seed"), "vae.seed");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid vae config: ") + e.what());
  }
  return c;
}

VaeModel VaeModel::initialize(const VaeConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  VaeModel m;
  m.config = config;
  auto in = static_cast<Eigen::Index>(config.input_dim);
  for (auto h : config.hidden) {
    m.encoder.push_back(nn::make_layer(in, static_cast<Eigen::Index>(h), nn::Activation::kReLU, rng));
    in = static_cast<Eigen::Index>(h);
  }
  const auto latent = static_cast<Eigen::Index>(config.latent_dim);
  m.mean_head = nn::make_layer(in, latent, nn::Activation::kLinear, rng);
  m.logvar_head = nn::make_layer(in, latent, nn::Activation::kLinear, rng);
  Eigen::Index d_in = latent;
  for (auto it = config.hidden.rbegin(); it != config.hidden.rend(); ++it) {
    m.decoder.push_back(nn::make_layer(d_in, static_cast<Eigen::Index>(*it), nn::Activation::kReLU, rng));
    d_in = static_cast<Eigen::Index>(*it);
  }
  m.decoder.push_back(
      nn::make_layer(d_in, static_cast<Eigen::Index>(config.input_dim), nn::Activation::kTanh6, rng));
  return m;
}

void VaeModel::encode_batch(const Eigen::MatrixXd& x, Eigen::MatrixXd& mu, Eigen::MatrixXd& logvar) const {
  Eigen::MatrixXd h = nn::forward(encoder, x);
  mu = nn::forward(std::span<const nn::DenseLayer>(&mean_head, 1), h);
  logvar = nn::forward(std::span<const nn::DenseLayer>(&logvar_head, 1), h);
}

Eigen::MatrixXd VaeModel::decode_batch(const Eigen::MatrixXd& z) const { return nn::forward(decoder, z); }

LatentFrame encode(const VaeModel& model, const SkeletonPose& pose) {
  Eigen::MatrixXd x = Eigen::Map<const Eigen::VectorXd>(pose.coords.data(), kPoseDim);
  Eigen::MatrixXd mu, logvar;
  model.encode_batch(x, mu, logvar);
  if (!mu.allFinite() || !logvar.allFinite()) throw NumericError("encoder produced non-finite output (model corrupt?)");
  return {mu.col(0), logvar.col(0)};
}

SkeletonPose decode(const VaeModel& model, const Eigen::VectorXd& z) {
  if (z.size() != static_cast<Eigen::Index>(model.config.latent_dim))
    throw InvalidArgument("decode: latent vector has wrong length");
  Eigen::MatrixXd x = model.decode_batch(z);
  SkeletonPose pose;
  for (std::size_t i = 0; i < kPoseDim; ++i) pose.coords[i] = x(static_cast<Eigen::Index>(i), 0);
  return pose;
}

Eigen::VectorXd reparameterize(const LatentFrame& frame, const Eigen::VectorXd& eps, double noise_scale) {
  if (eps.size() != frame.mu.size() || frame.logvar.size() != frame.mu.size())
    throw InvalidArgument("reparameterize: shape mismatch");
  return frame.mu.array() + noise_scale * (0.5 * frame.logvar.array()).exp() * eps.array();
}

VaeLoss vae_loss(std::span<const double> x, std::span<const double> x_hat, std::span<const double> mu,
                 std::span<const double> logvar, const NodePartition& partition, double alpha, double beta) {
  if (x.size() != x_hat.size() || mu.size() != logvar.size()) throw InvalidArgument("vae_loss: shape mismatch");
  auto hands = partition.hand_coords();
  auto body = partition.body_coords();
  if (hands.size() + body.size() != x.size()) throw InvalidArgument("vae_loss: partition does not cover the pose");
  VaeLoss out;
  for (auto c : hands) out.l1_hands += std::abs(x[c] - x_hat[c]);
  for (auto c : body) out.l1_body += std::abs(x[c] - x_hat[c]);
  out.l1_hands /= static_cast<double>(hands.size());
  out.l1_body /= static_cast<double>(body.size());
  for (std::size_t d = 0; d < mu.size(); ++d)
    out.kld += -0.5 * (1.0 + logvar[d] - mu[d] * mu[d] - std::exp(logvar[d]));
  out.total = alpha * out.l1_hands + (1.0 - alpha) * out.l1_body + beta * out.kld;
  return out;
}

namespace {

struct CoordWeights {
  Eigen::VectorXd hand_mask;  // 1 on hand coordinates
  Eigen::VectorXd body_mask;
  double n_hands = 0.0;
  double n_body = 0.0;
};

CoordWeights coord_weights(const NodePartition& partition, Eigen::Index dim) {
  CoordWeights w;
  w.hand_mask = Eigen::VectorXd::Zero(dim);
  w.body_mask = Eigen::VectorXd::Zero(dim);
  for (auto c : partition.hand_coords()) w.hand_mask[static_cast<Eigen::Index>(c)] = 1.0;
  for (auto c : partition.body_coords()) w.body_mask[static_cast<Eigen::Index>(c)] = 1.0;
  w.n_hands = w.hand_mask.sum();
  w.n_body = w.body_mask.sum();
  if (w.n_hands + w.n_body != static_cast<double>(dim) || w.n_hands == 0.0 || w.n_body == 0.0)
    throw InvalidArgument("partition does not cover the pose coordinates");
  return w;
}

VaeLoss batch_loss_impl(const VaeModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& eps,
                        const CoordWeights& cw, VaeGradients* grads) {
  const auto& cfg = model.config;
  const double batch = static_cast<double>(x.cols());
  nn::Tape t_enc, t_mu, t_lv, t_dec;
  Eigen::MatrixXd h = nn::forward(model.encoder, x, grads ? &t_enc : nullptr);
  Eigen::MatrixXd mu = nn::forward(std::span<const nn::DenseLayer>(&model.mean_head, 1), h, grads ? &t_mu : nullptr);
  Eigen::MatrixXd lv =
      nn::forward(std::span<const nn::DenseLayer>(&model.logvar_head, 1), h, grads ? &t_lv : nullptr);
  Eigen::MatrixXd std_dev = (0.5 * lv.array()).exp();
  Eigen::MatrixXd z = mu + cfg.noise_scale * std_dev.cwiseProduct(eps);
  Eigen::MatrixXd x_hat = nn::forward(model.decoder, z, grads ? &t_dec : nullptr);

  Eigen::MatrixXd diff = x_hat - x;
  Eigen::VectorXd abs_row = diff.cwiseAbs().rowwise().sum();
  VaeLoss out;
  out.l1_hands = cw.hand_mask.dot(abs_row) / (cw.n_hands * batch);
  out.l1_body = cw.body_mask.dot(abs_row) / (cw.n_body * batch);
  out.kld = (-0.5 * (1.0 + lv.array() - mu.array().square() - lv.array().exp())).sum() / batch;
  out.total = cfg.alpha * out.l1_hands + (1.0 - cfg.alpha) * out.l1_body + cfg.beta * out.kld;
  if (!grads) return out;

  Eigen::VectorXd coord_w = (cfg.alpha / cw.n_hands) * cw.hand_mask + ((1.0 - cfg.alpha) / cw.n_body) * cw.body_mask;
  coord_w /= batch;
  Eigen::MatrixXd d_xhat = diff.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
  d_xhat.array().colwise() *= coord_w.array();

  nn::Gradients g_dec = nn::backward(model.decoder, t_dec, d_xhat);
  const Eigen::MatrixXd& d_z = g_dec.input;
  Eigen::MatrixXd d_mu = d_z + (cfg.beta / batch) * mu;
  Eigen::MatrixXd d_lv = (0.5 * cfg.noise_scale) * d_z.cwiseProduct(std_dev).cwiseProduct(eps) +
                         (0.5 * cfg.beta / batch) * (lv.array().exp() - 1.0).matrix();
  nn::Gradients g_mu = nn::backward(std::span<const nn::DenseLayer>(&model.mean_head, 1), t_mu, d_mu);
  nn::Gradients g_lv = nn::backward(std::span<const nn::DenseLayer>(&model.logvar_head, 1), t_lv, d_lv);
  Eigen::MatrixXd d_h = g_mu.input + g_lv.input;
  nn::Gradients g_enc = nn::backward(model.encoder, t_enc, d_h);

  grads->encoder = std::move(g_enc.layers);
  grads->mean_head = std::move(g_mu.layers[0]);
  grads->logvar_head = std::move(g_lv.layers[0]);
  grads->decoder = std::move(g_dec.layers);
  return out;
}

void add_blocks(std::vector<nn::ParamBlock>& out, const std::string& prefix, nn::DenseLayer& layer,
                const nn::LayerGrad& grad) {
  out.push_back({prefix + ".weights", std::span<double>(layer.weights.data(), layer.weights.size()),
                 std::span<const double>(grad.weights.data(), grad.weights.size())});
  out.push_back({prefix + ".biases", std::span<double>(layer.biases.data(), layer.biases.size()),
                 std::span<const double>(grad.biases.data(), grad.biases.size())});
}

}  // namespace

VaeLoss batch_loss(const VaeModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& eps,
                   const NodePartition& partition, VaeGradients* grads) {
  if (x.rows() != static_cast<Eigen::Index>(model.config.input_dim)) throw InvalidArgument("batch_loss: bad input rows");
  if (eps.rows() != static_cast<Eigen::Index>(model.config.latent_dim) || eps.cols() != x.cols())
    throw InvalidArgument("batch_loss: eps shape mismatch");
  return batch_loss_impl(model, x, eps, coord_weights(partition, x.rows()), grads);
}

std::vector<nn::ParamBlock> parameter_blocks(VaeModel& model, const VaeGradients& grads) {
  std::vector<nn::ParamBlock> out;
  for (std::size_t i = 0; i < model.encoder.size(); ++i)
    add_blocks(out, "encoder." + std::to_string(i), model.encoder[i], grads.encoder.at(i));
  add_blocks(out, "mean_head", model.mean_head, grads.mean_head);
  add_blocks(out, "logvar_head", model.logvar_head, grads.logvar_head);
  for (std::size_t i = 0; i < model.decoder.size(); ++i)
    add_blocks(out, "decoder." + std::to_string(i), model.decoder[i], grads.decoder.at(i));
  return out;
}

TrainResult train_vae(const Eigen::MatrixXd& poses, const NodePartition& partition, const VaeConfig& config,
                      const std::function<void(std::size_t, const VaeLoss&)>& on_epoch) {
  config.validate();
  FlushDenormalsScope ftz;
  const auto n = static_cast<std::size_t>(poses.cols());
  if (n < config.batch_size)
    throw InvalidArgument("training pool has " + std::to_string(n) + " poses, fewer than one batch");
  const CoordWeights cw = coord_weights(partition, poses.rows());
  const auto latent = static_cast<Eigen::Index>(config.latent_dim);

  TrainResult result{VaeModel::initialize(config), {}, {}, {}};
  VaeModel& model = result.model;
  result.initial = batch_loss_impl(model, poses, Eigen::MatrixXd::Zero(latent, poses.cols()), cw, nullptr);
  if (!std::isfinite(result.initial.total)) throw NumericError("non-finite initial loss");

  std::mt19937_64 rng(config.seed ^ 0x7261696eULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  nn::AdamState adam;
  adam.lr = config.lr;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Eigen::MatrixXd batch_x, eps;
  VaeGradients grads;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    VaeLoss sum;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size, ++batch_index) {
      const std::size_t b = std::min(config.batch_size, n - start);
      batch_x.resize(poses.rows(), static_cast<Eigen::Index>(b));
      for (std::size_t i = 0; i < b; ++i) batch_x.col(static_cast<Eigen::Index>(i)) = poses.col(order[start + i]);
      eps.resize(latent, static_cast<Eigen::Index>(b));
      for (Eigen::Index c = 0; c < eps.cols(); ++c)
        for (Eigen::Index r = 0; r < latent; ++r) eps(r, c) = normal(rng);
      VaeLoss loss = batch_loss_impl(model, batch_x, eps, cw, &grads);
      if (!std::isfinite(loss.total))
        throw NumericError("non-finite VAE loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index));
      auto blocks = parameter_blocks(model, grads);
      nn::adam_step(blocks, adam);
      const double w = static_cast<double>(b) / static_cast<double>(n);
      sum.total += w * loss.total;
      sum.l1_hands += w * loss.l1_hands;
      sum.l1_body += w * loss.l1_body;
      sum.kld += w * loss.kld;
    }
    result.epoch_means.push_back(sum);
    if (on_epoch) on_epoch(epoch, sum);
  }
  result.final = batch_loss_impl(model, poses, Eigen::MatrixXd::Zero(latent, poses.cols()), cw, nullptr);
  return result;
}

Eigen::MatrixXd pose_matrix(const PoseSequence& seq) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(kPoseDim), static_cast<Eigen::Index>(seq.frames.size()));
  for (std::size_t t = 0; t < seq.frames.size(); ++t)
    m.col(static_cast<Eigen::Index>(t)) = Eigen::Map<const Eigen::VectorXd>(seq.frames[t].coords.data(), kPoseDim);
  return m;
}

Eigen::MatrixXd native_pose_pool(const CorpusManifest& manifest) {
  std::vector<Eigen::MatrixXd> parts;
  Eigen::Index total = 0;
  for (const auto& e : manifest.entries_with_role(SignerRole::kNative)) {
    parts.push_back(pose_matrix(load_entry(manifest, e)));
    total += parts.back().cols();
  }
  Eigen::MatrixXd pool(static_cast<Eigen::Index>(kPoseDim), total);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    pool.middleCols(at, p.cols()) = p;
    at += p.cols();
  }
  return pool;
}

LatentSequence encode_sequence(const VaeModel& model, const PoseSequence& seq) {
  Eigen::MatrixXd mu, logvar;
  model.encode_batch(pose_matrix(seq), mu, logvar);
  if (!mu.allFinite() || !logvar.allFinite())
    throw NumericError("encoder produced non-finite output for (" + seq.sentence_id + ", " + seq.signer_id + ")");
  return {seq.sentence_id, seq.signer_id, mu.transpose(), logvar.transpose()};
}

LatentCorpus encode_corpus(const VaeModel& model, const CorpusManifest& manifest, std::size_t jobs) {
  std::vector<LatentSequence> out(manifest.entries.size());
  parallel_for(manifest.entries.size(), jobs,
               [&](std::size_t i) { out[i] = encode_sequence(model, load_entry(manifest, manifest.entries[i])); });
  LatentCorpus corpus;
  for (auto& s : out) {
    EntryKey key{s.sentence_id, s.signer_id};
    corpus.emplace(std::move(key), std::move(s));
  }
  return corpus;
}

json model_to_json(const VaeModel& model) {
  json j;
  j["format_version"] = 1;
  j["kind"] = "skeleton_vae";
  j["config"] = to_json(model.config);
  j["encoder"] = json::array();
  for (const auto& l : model.encoder) j["encoder"].push_back(nn::layer_to_json(l));
  j["mean_head"] = nn::layer_to_json(model.mean_head);
  j["logvar_head"] = nn::layer_to_json(model.logvar_head);
  j["decoder"] = json::array();
  for (const auto& l : model.decoder) j["decoder"].push_back(nn::layer_to_json(l));
  return j;
}

VaeModel model_from_json(const json& j) {
  try {
    if (j.at("format_version").get<int>() != 1) throw ParseError("unsupported model format_version");
    VaeModel m;
    m.config = vae_config_from_json(j.at("config"));
    for (const auto& l : j.at("encoder")) m.encoder.push_back(nn::layer_from_json(l));
    m.mean_head = nn::layer_from_json(j.at("mean_head"));
    m.logvar_head = nn::layer_from_json(j.at("logvar_head"));
    for (const auto& l : j.at("decoder")) m.decoder.push_back(nn::layer_from_json(l));
    if (m.encoder.empty() || m.decoder.empty()) throw ParseError("model has no layers");
    if (m.encoder.front().in_dim() != static_cast<Eigen::Index>(kPoseDim) ||
        m.decoder.back().out_dim() != static_cast<Eigen::Index>(kPoseDim) ||
        m.mean_head.out_dim() != static_cast<Eigen::Index>(m.config.latent_dim))
      throw ParseError("model layer shapes are inconsistent");
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("invalid model: ") + e.what());
  }
}

void save_model(const VaeModel& model, const std::filesystem::path& path) {
  write_text_file(path, model_to_json(model).dump() + "\n");
}

VaeModel load_model(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": malformed JSON: " + e.what());
  }
  return model_from_json(j);
}

std::string serialize_latents(const LatentSequence& seq, const std::string& comment) {
  std::string out;
  if (!comment.empty()) out += "# " + comment + "\n";
  for (Eigen::Index t = 0; t < seq.mu.rows(); ++t) {
    for (Eigen::Index d = 0; d < seq.mu.cols(); ++d) {
      if (d) out.push_back(',');
      out += format_double(seq.mu(t, d));
    }
    for (Eigen::Index d = 0; d < seq.logvar.cols(); ++d) {
      out.push_back(',');
      out += format_double(seq.logvar(t, d));
    }
    out.push_back('\n');
  }
  return out;
}

void save_latents(const LatentSequence& seq, const std::filesystem::path& path, const std::string& comment) {
  write_text_file(path, serialize_latents(seq, comment));
}

LatentSequence load_latents(const std::filesystem::path& path) {
  std::string text = read_text_file(path);
  std::vector<std::vector<double>> rows;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::string_view line(text.data() + pos, (nl == std::string::npos ? text.size() : nl) - pos);
    pos = nl == std::string::npos ? text.size() : nl + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    rows.push_back(parse_csv_row(line, line_no));
    if (rows.back().size() != rows.front().size() || rows.back().size() % 2 != 0 || rows.back().empty())
      throw DimensionError("latent rows need an even, consistent number of columns", line_no);
  }
  if (rows.empty()) throw ParseError(path.string() + ": no latent frames");
  const auto dims = static_cast<Eigen::Index>(rows.front().size() / 2);
  LatentSequence seq;
  seq.mu.resize(static_cast<Eigen::Index>(rows.size()), dims);
  seq.logvar.resize(static_cast<Eigen::Index>(rows.size()), dims);
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (Eigen::Index d = 0; d < dims; ++d) {
      seq.mu(static_cast<Eigen::Index>(t), d) = rows[t][static_cast<std::size_t>(d)];
      seq.logvar(static_cast<Eigen::Index>(t), d) = rows[t][static_cast<std::size_t>(d + dims)];
    }
  return seq;
}

}  // namespace menv
