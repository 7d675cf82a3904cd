#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace menv {

inline constexpr std::size_t kNodeCount = 61;
inline constexpr std::size_t kPoseDim = 3 * kNodeCount;  // 183
// Canonical coordinates live in [-kCoordLimit, kCoordLimit]; the decoder's
// 6*tanh output range.
inline constexpr double kCoordLimit = 6.0;
inline constexpr double kRangeTolerance = 1e-6;

// One canonical skeleton frame, 61 nodes x (x, y, z), node-major.
struct SkeletonPose {
  std::array<double, kPoseDim> coords{};

  friend bool operator==(const SkeletonPose&, const SkeletonPose&) = default;
};

// Throws RangeError if any coordinate is non-finite or outside the canonical range.
void check_pose(const SkeletonPose& pose);

// Which nodes count as "hands" and which as "body" in the reconstruction loss.
struct NodePartition {
  std::vector<std::size_t> hand_nodes;
  std::vector<std::size_t> body_nodes;

  // Coordinate indices (node * 3 + axis) for each subset, ascending.
  std::vector<std::size_t> hand_coords() const;
  std::vector<std::size_t> body_coords() const;

  // Empty when disjoint, covering {0..60} and both sides non-empty.
  std::vector<std::string> violations() const;
};

// Node 0..18 body, 19..60 hands (two 21-keypoint hands).
NodePartition default_partition();

enum class SignerRole { kNative, kLearner };

const char* to_string(SignerRole role);
SignerRole role_from_string(const std::string& text);

struct PoseSequence {
  std::string sentence_id;
  std::string signer_id;
  SignerRole role = SignerRole::kNative;
  std::vector<SkeletonPose> frames;
  double frame_rate = 30.0;

  std::size_t length() const { return frames.size(); }
};

// Pose CSV: no header, one frame per row, 183 comma-separated reals.
// Throws ParseError / DimensionError (with line numbers) or RangeError.
PoseSequence load_sequence(const std::filesystem::path& path);
void save_sequence(const PoseSequence& seq, const std::filesystem::path& path);
std::string serialize_sequence(const PoseSequence& seq);

// (sentence id, signer id)
using EntryKey = std::pair<std::string, std::string>;

struct SignerEntry {
  std::string id;
  SignerRole role = SignerRole::kNative;
};

struct ManifestEntry {
  std::string sentence;
  std::string signer;
  std::filesystem::path path;  // as written in the manifest (may be relative)
};

struct CorpusManifest {
  std::vector<std::string> sentences;
  std::vector<SignerEntry> signers;
  std::vector<ManifestEntry> entries;
  NodePartition partition;
  double frame_rate = 30.0;
  // Directory relative entry paths are resolved against.
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const ManifestEntry& entry) const;
  const SignerEntry* find_signer(const std::string& id) const;
  // Entries whose signer has the given role, in manifest order.
  std::vector<ManifestEntry> entries_with_role(SignerRole role) const;
};

CorpusManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const CorpusManifest& manifest, const std::filesystem::path& path);

// Loads the sequence for an entry and stamps ids and role from the manifest.
PoseSequence load_entry(const CorpusManifest& manifest, const ManifestEntry& entry);

// Every invariant violation found, in a stable order; empty means valid.
std::vector<std::string> validate_corpus(const CorpusManifest& manifest);

}  // namespace menv
