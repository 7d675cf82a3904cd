#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "menv/skeleton_io.hpp"

namespace menv {

// Synthetic multi-signer corpora with known ground truth. Every generator is
// a pure function of its seed and parameters.

struct Sinusoid {
  double amplitude = 0.0;
  double frequency = 0.0;  // cycles over the whole normalized time span
  double phase = 0.0;
};

// Channels [0, hand_channels) drive hand nodes; the rest drive body nodes.
struct SentencePrototype {
  std::string sentence_id;
  std::size_t duration = 0;
  std::size_t hand_channels = 0;
  std::vector<std::vector<Sinusoid>> channels;
  std::vector<double> peak;  // per-channel bound on |value|

  std::size_t channel_count() const { return channels.size(); }
  bool is_hand_channel(std::size_t g) const { return g < hand_channels; }
  // Channel value at normalized time tau in [0, 1].
  double value(std::size_t g, double tau) const;
  // channel_count() x duration matrix of samples on the uniform grid.
  Eigen::MatrixXd samples() const;
};

inline constexpr double kHandAmplitudeRatio = 0.4;
inline constexpr double kBodyFrequencyMin = 0.5;
inline constexpr double kBodyFrequencyMax = 2.0;
inline constexpr double kHandFrequencyMin = 6.0;
inline constexpr double kHandFrequencyMax = 18.0;

SentencePrototype gen_prototype(std::uint64_t seed, const std::string& sentence_id, std::size_t duration,
                                std::size_t channels);

// Per-signer production style. The warp is a normalized monotone
// piecewise-linear map [0,1] -> [0,1]; tempo is the mean slope in
// prototype frames per produced frame, so a production lasts
// round(duration / tempo) frames.
struct SignerStyle {
  double tempo = 1.0;
  std::vector<double> knots_in{0.0, 1.0};
  std::vector<double> knots_out{0.0, 1.0};
  std::vector<double> gains;
  double noise_std = 0.0;
  std::uint64_t noise_seed = 0;

  double warp(double u) const;
  std::size_t length(std::size_t duration) const;
};

SignerStyle identity_style(std::size_t channels);
// Tempo and local slopes stay within [0.8, 1.25]; gains within [0.9, 1.1].
SignerStyle sample_style(std::uint64_t seed, std::size_t channels, double noise_std);

enum class DeviationMode { kAmplitudeError, kWrongChannel, kFreeze };

const char* to_string(DeviationMode mode);
DeviationMode deviation_mode_from_string(const std::string& text);

struct DeviationSpec {
  double delta = 0.0;
  double start = 0.15;  // fraction of the production
  double end = 0.85;
  DeviationMode mode = DeviationMode::kAmplitudeError;
};

// Peak additive offset of an AmplitudeError deviation per unit delta, as a
// share of each channel's peak amplitude.
inline constexpr double kAmplitudeErrorScale = 0.5;

// Fixed linear map from generator channels to pose coordinates. Hand
// channels only reach hand coordinates, body channels only body coordinates.
struct DecoderMap {
  Eigen::VectorXd rest;     // kPoseDim
  Eigen::MatrixXd weights;  // kPoseDim x channels

  SkeletonPose apply(const Eigen::VectorXd& channels) const;
};

DecoderMap make_decoder_map(std::uint64_t seed, std::size_t channels, std::size_t hand_channels,
                            const NodePartition& partition);

// Channel trajectories (channels x length) of one production, before the map.
Eigen::MatrixXd production_channels(const SentencePrototype& proto, const SignerStyle& style,
                                    const DeviationSpec* deviation = nullptr);

PoseSequence gen_signer_sequence(const SentencePrototype& proto, const SignerStyle& style, const DecoderMap& map);
PoseSequence gen_learner_sequence(const SentencePrototype& proto, const SignerStyle& style, const DeviationSpec& dev,
                                  const DecoderMap& map);

struct CorpusSpec {
  std::uint64_t seed = 0;
  std::size_t sentences = 4;
  std::size_t natives = 6;
  std::vector<DeviationSpec> learners;  // one per learner
  std::size_t duration = 120;
  std::size_t channels = 6;
  double noise_std = 0.01;
  double frame_rate = 30.0;
};

// Learner deviation in the default AmplitudeError mode over (0.15, 0.85).
DeviationSpec default_deviation(double delta);

struct LearnerTruth {
  std::string sentence;
  std::string signer;
  DeviationSpec deviation;
};

// Writes <sentence>_<signer>.csv files, manifest.json and truth.json into dir.
CorpusManifest gen_corpus(const CorpusSpec& spec, const std::filesystem::path& dir);

std::vector<LearnerTruth> load_truth(const std::filesystem::path& path);
void save_truth(const std::vector<LearnerTruth>& truth, const std::filesystem::path& path);

// Stable sub-seed for a (sentence, signer) pair: seed XOR hash(j, k).
std::uint64_t derive_seed(std::uint64_t seed, const std::string& sentence, const std::string& signer);

std::string sentence_name(std::size_t j);
std::string native_name(std::size_t k);
std::string learner_name(std::size_t k);

}  // namespace menv
