#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "menv/reference.hpp"
#include "menv/vae.hpp"

namespace menv {

inline constexpr std::size_t kDefaultDtwRadius = 20;

// Monotone correspondence between reference frames and test frames.
struct WarpPath {
  std::vector<std::pair<std::size_t, std::size_t>> steps;  // (t_ref, t_test)
};

// Throws InvalidArgument describing the first broken invariant.
void check_warp_path(const WarpPath& path, std::size_t ref_len, std::size_t test_len);

struct DtwResult {
  double cost = 0.0;  // sum of Euclidean frame distances along the path
  WarpPath path;
};

// Exact O(n*m) dynamic program. Rows of ref/test are frames.
DtwResult dtw_full(const Eigen::MatrixXd& ref, const Eigen::MatrixXd& test);

// Multiscale DTW: coarsen by 2, solve, then refine inside the projected path
// widened by `radius`. Falls back to the full program whenever either side
// has at most 2 * radius frames.
DtwResult dtw(const Eigen::MatrixXd& ref, const Eigen::MatrixXd& test, std::size_t radius = kDefaultDtwRadius);

struct AlignedLatentSequence {
  std::string sentence_id;
  std::string signer_id;
  std::string reference_signer;
  Eigen::MatrixXd mu;      // T* x dims
  Eigen::MatrixXd logvar;  // T* x dims

  std::size_t length() const { return static_cast<std::size_t>(mu.rows()); }
};

using AlignedCorpus = std::map<EntryKey, AlignedLatentSequence>;

// Each reference frame takes the mean of the test frames mapped onto it.
AlignedLatentSequence apply_warp(const WarpPath& path, const LatentSequence& test, std::size_t ref_len);

// Aligns one production to a reference on the latent means.
AlignedLatentSequence align_to_reference(const LatentSequence& reference, const LatentSequence& test,
                                         std::size_t radius = kDefaultDtwRadius);

// Aligns every sequence of each referenced sentence onto its reference
// timeline. The reference itself is copied unchanged.
AlignedCorpus align_corpus(const LatentCorpus& latents, const std::vector<ReferenceChoice>& references,
                           std::size_t radius = kDefaultDtwRadius, std::size_t jobs = 1);

void save_aligned(const AlignedLatentSequence& seq, const std::filesystem::path& path);

}  // namespace menv
