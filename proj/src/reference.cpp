#include "menv/reference.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "menv/error.hpp"

namespace menv {

using nlohmann::json;

Eigen::MatrixXd resample_latents(const Eigen::MatrixXd& frames, std::size_t target_len) {
  if (target_len < 2) throw InvalidArgument("resample target length must be >= 2");
  if (frames.rows() < 1) throw InvalidArgument("cannot resample an empty sequence");
  const Eigen::Index n = frames.rows();
  const auto m = static_cast<Eigen::Index>(target_len);
  Eigen::MatrixXd out(m, frames.cols());
  if (n == m) return frames;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (n == 1) {
      out.row(i) = frames.row(0);
      continue;
    }
    if (i == m - 1) {
      out.row(i) = frames.row(n - 1);
      continue;
    }
    const double pos = static_cast<double>(i) * static_cast<double>(n - 1) / static_cast<double>(m - 1);
    const auto lo = static_cast<Eigen::Index>(std::floor(pos));
    const double frac = pos - static_cast<double>(lo);
    if (frac == 0.0 || lo + 1 >= n)
      out.row(i) = frames.row(lo);
    else
      out.row(i) = (1.0 - frac) * frames.row(lo) + frac * frames.row(lo + 1);
  }
  return out;
}

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw InvalidArgument("cosine_similarity: length mismatch");
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw DegenerateInput("cosine_similarity: zero-norm input");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

std::size_t median_length(const std::vector<const LatentSequence*>& sequences) {
  std::vector<std::size_t> lengths;
  for (const auto* s : sequences) lengths.push_back(s->length());
  std::sort(lengths.begin(), lengths.end());
  return lengths[(lengths.size() - 1) / 2];
}

SimilarityMatrix similarity_matrix(const std::vector<const LatentSequence*>& sequences, std::size_t target_len) {
  const std::size_t k = sequences.size();
  std::vector<Eigen::VectorXd> flat(k);
  SimilarityMatrix sim;
  for (std::size_t i = 0; i < k; ++i) {
    // Transposing gives a column-major buffer whose order is time-major.
    Eigen::MatrixXd r = resample_latents(sequences[i]->mu, target_len).transpose();
    flat[i] = Eigen::Map<const Eigen::VectorXd>(r.data(), r.size());
    if (flat[i].norm() == 0.0)
      throw DegenerateInput("all-zero latent sequence for signer '" + sequences[i]->signer_id + "'");
    sim.signers.push_back(sequences[i]->signer_id);
  }
  if (k > 0) sim.sentence_id = sequences[0]->sentence_id;
  sim.values = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) {
      double c = cosine_similarity(flat[i], flat[j]);
      sim.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = c;
      sim.values(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = c;
    }
  return sim;
}

ReferenceChoice select_reference(const std::vector<const LatentSequence*>& sequences) {
  if (sequences.size() < 2) throw InvalidArgument("reference selection needs at least two productions");
  ReferenceChoice choice;
  choice.similarity = similarity_matrix(sequences, std::max<std::size_t>(2, median_length(sequences)));
  choice.sentence_id = choice.similarity.sentence_id;
  choice.signers = choice.similarity.signers;
  const auto k = static_cast<Eigen::Index>(sequences.size());
  for (Eigen::Index i = 0; i < k; ++i) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < k; ++j)
      if (j != i) sum += choice.similarity.values(i, j);
    choice.scores.push_back(sum / static_cast<double>(k - 1));
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < choice.scores.size(); ++i)
    if (choice.scores[i] > choice.scores[best]) best = i;
  choice.reference_index = best;
  choice.reference_signer = choice.signers[best];
  return choice;
}

json to_json(const ReferenceChoice& choice) {
  json scores = json::object();
  for (std::size_t i = 0; i < choice.signers.size(); ++i) scores[choice.signers[i]] = choice.scores[i];
  return json{{"sentence", choice.sentence_id}, {"reference_signer", choice.reference_signer}, {"scores", scores}};
}

}  // namespace menv
