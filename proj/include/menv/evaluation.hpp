#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "menv/skeleton_io.hpp"
#include "menv/synth.hpp"

namespace menv {

struct RatingRecord {
  std::string rater_id;
  std::string signer_id;
  std::string sentence_id;
  std::vector<int> components;  // each in {1, 2, 3}
};

void check_record(const RatingRecord& record);

// Per-rater component mean, then mean across raters. Keys are (sentence, signer).
std::map<EntryKey, double> aggregate_ratings(const std::vector<RatingRecord>& records);

// Component means are z-scored within each rater before the cross-rater mean.
std::map<EntryKey, double> rater_standardized_ratings(const std::vector<RatingRecord>& records);

// Stand-in ratings for synthetic corpora: 3 - delta clamped to [1, 3].
std::map<EntryKey, double> proxy_ratings(const std::vector<LearnerTruth>& truth);

// Simulated raters scoring each component as round(3 - delta + noise) in [1, 3].
std::vector<RatingRecord> simulate_ratings(const std::vector<LearnerTruth>& truth, std::size_t raters,
                                           std::size_t components, double noise_std, std::uint64_t seed);

std::vector<RatingRecord> ratings_from_json(const nlohmann::json& j);
nlohmann::json to_json(const std::vector<RatingRecord>& records);

// Standardizes each group with its sample standard deviation. Throws
// DegenerateInput naming the group if it has < 2 values or zero spread.
std::vector<double> zscore(const std::vector<double>& values, const std::vector<std::string>& groups);
std::vector<double> zscore(const std::vector<double>& values);

double pearson(const std::vector<double>& x, const std::vector<double>& y);
// Least-squares slope of y on x after standardizing both.
double standardized_beta(const std::vector<double>& x, const std::vector<double>& y);
// Pearson correlation of average ranks.
double spearman(const std::vector<double>& x, const std::vector<double>& y);
std::vector<double> average_ranks(const std::vector<double>& values);

struct SystemScore {
  std::string sentence_id;
  std::string signer_id;
  double pd_measure = 0.0;
  double ood_count = 0.0;
};

struct SentenceEvaluation {
  std::string sentence_id;
  std::size_t pairs = 0;
  double beta_pd = 0.0;
  double beta_ood = 0.0;
  double srcc_pd = 0.0;
  double srcc_ood = 0.0;
};

struct EvaluationReport {
  std::vector<SentenceEvaluation> sentences;
  double mean_beta_pd = 0.0;
  double mean_beta_ood = 0.0;
  double mean_srcc_pd = 0.0;
  double mean_srcc_ood = 0.0;
};

// manual holds ratings in the rating direction (higher = better). Both sides
// are z-scored per sentence before the statistics are taken.
EvaluationReport evaluate_run(const std::vector<SystemScore>& scores, const std::map<EntryKey, double>& manual);

nlohmann::json to_json(const EvaluationReport& report);

}  // namespace menv
