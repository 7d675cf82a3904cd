#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "menv/vae.hpp"

namespace menv {

// Per-dimension linear interpolation over normalized time; endpoints are
// preserved exactly. Returns target_len x dims.
Eigen::MatrixXd resample_latents(const Eigen::MatrixXd& frames, std::size_t target_len);

// Throws DegenerateInput if either vector has zero norm.
double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

struct SimilarityMatrix {
  std::string sentence_id;
  std::vector<std::string> signers;
  Eigen::MatrixXd values;
};

struct ReferenceChoice {
  std::string sentence_id;
  std::string reference_signer;
  std::size_t reference_index = 0;
  std::vector<std::string> signers;
  std::vector<double> scores;  // mean similarity to every other signer
  SimilarityMatrix similarity;
};

// Lower median of the sequence lengths (always an actual length).
std::size_t median_length(const std::vector<const LatentSequence*>& sequences);

// Cosine similarity of flattened (time-major) latent means resampled to
// target_len frames.
SimilarityMatrix similarity_matrix(const std::vector<const LatentSequence*>& sequences, std::size_t target_len);

// Picks the production with the highest mean off-diagonal similarity; ties go
// to the lowest index. Needs at least two sequences.
ReferenceChoice select_reference(const std::vector<const LatentSequence*>& sequences);

nlohmann::json to_json(const ReferenceChoice& choice);

}  // namespace menv
