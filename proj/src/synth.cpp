#include "menv/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <nlohmann/json.hpp>

#include "menv/error.hpp"
#include "menv/text_io.hpp"

namespace menv {

using nlohmann::json;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t derive_tag_seed(std::uint64_t seed, const std::string& tag) { return seed ^ splitmix64(fnv1a(tag)); }

std::string zero_padded(char prefix, std::size_t n) {
  std::string digits = std::to_string(n);
  if (digits.size() < 2) digits.insert(0, 2 - digits.size(), '0');
  return std::string(1, prefix) + digits;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, const std::string& sentence, const std::string& signer) {
  return derive_tag_seed(seed, sentence + "/" + signer);
}

std::string sentence_name(std::size_t j) { return zero_padded('s', j); }
std::string native_name(std::size_t k) { return zero_padded('n', k); }
std::string learner_name(std::size_t k) { return zero_padded('l', k); }

double SentencePrototype::value(std::size_t g, double tau) const {
  const auto& parts = channels.at(g);
  double sum = 0.0, norm = 0.0;
  for (const auto& s : parts) {
    sum += s.amplitude * std::sin(2.0 * std::numbers::pi * s.frequency * tau + s.phase);
    norm += s.amplitude;
  }
  return peak[g] * sum / norm;
}

Eigen::MatrixXd SentencePrototype::samples() const {
  Eigen::MatrixXd out(channel_count(), duration);
  for (std::size_t t = 0; t < duration; ++t) {
    double tau = static_cast<double>(t) / static_cast<double>(duration - 1);
    for (std::size_t g = 0; g < channel_count(); ++g) out(g, t) = value(g, tau);
  }
  return out;
}

SentencePrototype gen_prototype(std::uint64_t seed, const std::string& sentence_id, std::size_t duration,
                                std::size_t channels) {
  if (duration < 20) throw InvalidArgument("prototype duration must be >= 20 frames");
  if (channels < 4) throw InvalidArgument("prototype needs >= 4 channels");
  std::mt19937_64 rng(derive_tag_seed(seed, "prototype/" + sentence_id));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> count(2, 4);

  SentencePrototype p;
  p.sentence_id = sentence_id;
  p.duration = duration;
  p.hand_channels = channels / 2;
  p.channels.resize(channels);
  p.peak.resize(channels);
  for (std::size_t g = 0; g < channels; ++g) {
    bool hand = p.is_hand_channel(g);
    double f_lo = hand ? kHandFrequencyMin : kBodyFrequencyMin;
    double f_hi = hand ? kHandFrequencyMax : kBodyFrequencyMax;
    int n = count(rng);
    for (int i = 0; i < n; ++i) {
      Sinusoid s;
      s.amplitude = 0.3 + 0.7 * unit(rng);
      s.frequency = f_lo + (f_hi - f_lo) * unit(rng);
      s.phase = 2.0 * std::numbers::pi * unit(rng);
      p.channels[g].push_back(s);
    }
    p.peak[g] = hand ? kHandAmplitudeRatio : 1.0;
  }
  return p;
}

double SignerStyle::warp(double u) const {
  u = std::clamp(u, 0.0, 1.0);
  auto it = std::upper_bound(knots_in.begin(), knots_in.end(), u);
  std::size_t i = it == knots_in.end() ? knots_in.size() - 1 : static_cast<std::size_t>(it - knots_in.begin());
  if (i == 0) return knots_out.front();
  double x0 = knots_in[i - 1], x1 = knots_in[i];
  double y0 = knots_out[i - 1], y1 = knots_out[i];
  if (x1 <= x0) return y1;
  return y0 + (y1 - y0) * (u - x0) / (x1 - x0);
}

std::size_t SignerStyle::length(std::size_t duration) const {
  return static_cast<std::size_t>(std::lround(static_cast<double>(duration) / tempo));
}

SignerStyle identity_style(std::size_t channels) {
  SignerStyle s;
  s.gains.assign(channels, 1.0);
  return s;
}

SignerStyle sample_style(std::uint64_t seed, std::size_t channels, double noise_std) {
  std::mt19937_64 rng(derive_tag_seed(seed, "style"));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  constexpr int kSegments = 4;
  SignerStyle s;
  s.noise_std = noise_std;
  s.noise_seed = splitmix64(seed ^ 0x5eedULL);
  s.tempo = 0.85 + 0.3 * unit(rng);
  std::vector<double> slopes(kSegments);
  // Rejection keeps every local slope tempo * r within [0.8, 1.25].
  while (true) {
    double mean = 0.0;
    for (auto& r : slopes) {
      r = 0.85 + 0.3 * unit(rng);
      mean += r / kSegments;
    }
    for (auto& r : slopes) r /= mean;
    bool ok = std::all_of(slopes.begin(), slopes.end(), [&](double r) {
      double local = s.tempo * r;
      return local >= 0.8 && local <= 1.25;
    });
    if (ok) break;
  }
  s.knots_in.assign(kSegments + 1, 0.0);
  s.knots_out.assign(kSegments + 1, 0.0);
  for (int i = 1; i <= kSegments; ++i) {
    s.knots_in[i] = static_cast<double>(i) / kSegments;
    s.knots_out[i] = s.knots_out[i - 1] + slopes[i - 1] / kSegments;
  }
  s.knots_in.back() = 1.0;
  s.knots_out.back() = 1.0;
  s.gains.resize(channels);
  for (auto& g : s.gains) g = 0.9 + 0.2 * unit(rng);
  return s;
}

const char* to_string(DeviationMode mode) {
  switch (mode) {
    case DeviationMode::kAmplitudeError: return "amplitude";
    case DeviationMode::kWrongChannel: return "wrong_channel";
    case DeviationMode::kFreeze: return "freeze";
  }
  return "amplitude";
}

DeviationMode deviation_mode_from_string(const std::string& text) {
  if (text == "amplitude") return DeviationMode::kAmplitudeError;
  if (text == "wrong_channel") return DeviationMode::kWrongChannel;
  if (text == "freeze") return DeviationMode::kFreeze;
  throw ParseError("unknown deviation mode '" + text + "'");
}

DeviationSpec default_deviation(double delta) {
  DeviationSpec d;
  d.delta = delta;
  return d;
}

SkeletonPose DecoderMap::apply(const Eigen::VectorXd& channels) const {
  Eigen::VectorXd x = rest + weights * channels;
  SkeletonPose pose;
  for (std::size_t i = 0; i < kPoseDim; ++i) pose.coords[i] = std::clamp(x[i], -kCoordLimit, kCoordLimit);
  return pose;
}

DecoderMap make_decoder_map(std::uint64_t seed, std::size_t channels, std::size_t hand_channels,
                            const NodePartition& partition) {
  std::mt19937_64 rng(derive_tag_seed(seed, "decoder-map"));
  std::uniform_real_distribution<double> rest(-2.0, 2.0);
  std::normal_distribution<double> weight(0.0, 1.0);
  DecoderMap map;
  map.rest.resize(kPoseDim);
  map.weights = Eigen::MatrixXd::Zero(kPoseDim, channels);
  for (std::size_t i = 0; i < kPoseDim; ++i) map.rest[i] = rest(rng);
  for (auto c : partition.hand_coords())
    for (std::size_t g = 0; g < hand_channels; ++g) map.weights(c, g) = weight(rng);
  for (auto c : partition.body_coords())
    for (std::size_t g = hand_channels; g < channels; ++g) map.weights(c, g) = weight(rng);
  return map;
}

Eigen::MatrixXd production_channels(const SentencePrototype& proto, const SignerStyle& style,
                                    const DeviationSpec* dev) {
  const std::size_t n = style.length(proto.duration);
  const std::size_t channels = proto.channel_count();
  Eigen::MatrixXd c(channels, n);
  std::vector<double> u(n);
  for (std::size_t i = 0; i < n; ++i) {
    u[i] = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
    double tau = style.warp(u[i]);
    for (std::size_t g = 0; g < channels; ++g) c(g, i) = style.gains[g] * proto.value(g, tau);
  }
  if (!dev || dev->delta == 0.0) return c;
  if (!(dev->start >= 0.0 && dev->start < dev->end && dev->end <= 1.0))
    throw InvalidArgument("deviation window must satisfy 0 <= start < end <= 1");

  auto inside = [&](std::size_t i) { return u[i] >= dev->start && u[i] <= dev->end; };
  std::size_t first = n;
  for (std::size_t i = 0; i < n; ++i)
    if (inside(i)) {
      first = i;
      break;
    }
  if (first == n) return c;
  const Eigen::VectorXd held = c.col(first);
  const std::size_t source = proto.hand_channels;  // first body channel
  for (std::size_t i = first; i < n && inside(i); ++i) {
    switch (dev->mode) {
      case DeviationMode::kAmplitudeError: {
        double phase = std::numbers::pi * (u[i] - dev->start) / (dev->end - dev->start);
        double bump = std::sin(phase) * std::sin(phase);
        for (std::size_t g = 0; g < channels; ++g) {
          double sign = g % 2 == 0 ? 1.0 : -1.0;
          c(g, i) += dev->delta * kAmplitudeErrorScale * proto.peak[g] * bump * sign;
        }
        break;
      }
      case DeviationMode::kWrongChannel:
        c(0, i) = (1.0 - dev->delta) * c(0, i) + dev->delta * c(source, i);
        break;
      case DeviationMode::kFreeze:
        c.col(i) = (1.0 - dev->delta) * c.col(i) + dev->delta * held;
        break;
    }
  }
  return c;
}

namespace {

PoseSequence render(const Eigen::MatrixXd& channels, const SignerStyle& style, const DecoderMap& map) {
  PoseSequence seq;
  seq.frames.reserve(static_cast<std::size_t>(channels.cols()));
  std::mt19937_64 rng(style.noise_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd noise(static_cast<Eigen::Index>(kPoseDim));
  for (Eigen::Index i = 0; i < channels.cols(); ++i) {
    // Noise is drawn for every frame regardless of noise_std so that the
    // stream is identical between signer and learner renderings.
    for (Eigen::Index c = 0; c < noise.size(); ++c) noise[c] = normal(rng);
    Eigen::VectorXd x = map.rest + map.weights * channels.col(i);
    if (style.noise_std != 0.0) x += style.noise_std * noise;
    SkeletonPose pose;
    for (std::size_t c = 0; c < kPoseDim; ++c) pose.coords[c] = std::clamp(x[c], -kCoordLimit, kCoordLimit);
    seq.frames.push_back(pose);
  }
  return seq;
}

}  // namespace

PoseSequence gen_signer_sequence(const SentencePrototype& proto, const SignerStyle& style, const DecoderMap& map) {
  PoseSequence seq = render(production_channels(proto, style), style, map);
  seq.sentence_id = proto.sentence_id;
  return seq;
}

PoseSequence gen_learner_sequence(const SentencePrototype& proto, const SignerStyle& style, const DeviationSpec& dev,
                                  const DecoderMap& map) {
  PoseSequence seq = render(production_channels(proto, style, &dev), style, map);
  seq.sentence_id = proto.sentence_id;
  seq.role = SignerRole::kLearner;
  return seq;
}

CorpusManifest gen_corpus(const CorpusSpec& spec, const std::filesystem::path& dir) {
  if (spec.sentences < 1) throw InvalidArgument("corpus needs at least one sentence");
  if (spec.natives < 3) throw InvalidArgument("corpus needs at least three native signers");

  CorpusManifest m;
  m.partition = default_partition();
  m.frame_rate = spec.frame_rate;
  m.base_dir = dir;
  for (std::size_t j = 0; j < spec.sentences; ++j) m.sentences.push_back(sentence_name(j));
  for (std::size_t k = 0; k < spec.natives; ++k) m.signers.push_back({native_name(k), SignerRole::kNative});
  for (std::size_t k = 0; k < spec.learners.size(); ++k) m.signers.push_back({learner_name(k), SignerRole::kLearner});

  const std::size_t hand_channels = spec.channels / 2;
  DecoderMap map = make_decoder_map(spec.seed, spec.channels, hand_channels, m.partition);
  std::vector<LearnerTruth> truth;

  for (const auto& sentence : m.sentences) {
    SentencePrototype proto = gen_prototype(spec.seed, sentence, spec.duration, spec.channels);
    for (const auto& signer : m.signers) {
      SignerStyle style = sample_style(derive_seed(spec.seed, sentence, signer.id), spec.channels, spec.noise_std);
      PoseSequence seq;
      if (signer.role == SignerRole::kNative) {
        seq = gen_signer_sequence(proto, style, map);
      } else {
        std::size_t k = static_cast<std::size_t>(&signer - &m.signers[spec.natives]);
        const DeviationSpec& dev = spec.learners[k];
        seq = gen_learner_sequence(proto, style, dev, map);
        truth.push_back({sentence, signer.id, dev});
      }
      std::filesystem::path file = sentence + "_" + signer.id + ".csv";
      save_sequence(seq, dir / file);
      m.entries.push_back({sentence, signer.id, file});
    }
  }
  save_manifest(m, dir / "manifest.json");
  save_truth(truth, dir / "truth.json");
  return m;
}

void save_truth(const std::vector<LearnerTruth>& truth, const std::filesystem::path& path) {
  json doc;
  doc["learners"] = json::array();
  for (const auto& t : truth) {
    doc["learners"].push_back({{"signer", t.signer},
                               {"sentence", t.sentence},
                               {"delta", t.deviation.delta},
                               {"mode", to_string(t.deviation.mode)},
                               {"window", {t.deviation.start, t.deviation.end}}});
  }
  write_text_file(path, doc.dump(2) + "\n");
}

std::vector<LearnerTruth> load_truth(const std::filesystem::path& path) {
  std::vector<LearnerTruth> out;
  try {
    json doc = json::parse(read_text_file(path));
    for (const auto& e : doc.at("learners")) {
      LearnerTruth t;
      t.signer = e.at("signer").get<std::string>();
      t.sentence = e.at("sentence").get<std::string>();
      t.deviation.delta = e.at("delta").get<double>();
      t.deviation.mode = deviation_mode_from_string(e.at("mode").get<std::string>());
      t.deviation.start = e.at("window").at(0).get<double>();
      t.deviation.end = e.at("window").at(1).get<double>();
      out.push_back(t);
    }
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": invalid truth file: " + e.what());
  }
  return out;
}

}  // namespace menv
