#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "menv/envelope.hpp"

namespace menv {

enum class VarianceKind { kFunction, kPredictive };

const char* to_string(VarianceKind kind);
VarianceKind variance_kind_from_string(const std::string& text);

struct ScoringOptions {
  VarianceKind pd_variance = VarianceKind::kPredictive;
  VarianceKind ood_variance = VarianceKind::kPredictive;
  double z = 1.96;
  std::size_t min_run = 3;
  std::size_t dtw_radius = kDefaultDtwRadius;

  void validate() const;
};

nlohmann::json to_json(const ScoringOptions& options);
ScoringOptions scoring_options_from_json(const nlohmann::json& j, ScoringOptions defaults = {});

// All grids are T* x dims.
struct ScoreBreakdown {
  std::string sentence_id;
  std::string signer_id;
  double pd_measure = 0.0;
  std::size_t ood_count = 0;
  double mean_log_density = 0.0;  // diagnostic only
  Eigen::MatrixXd value;
  Eigen::MatrixXd mean;
  Eigen::MatrixXd var_f;
  Eigen::MatrixXd var_pred;
  Eigen::MatrixXd density;
  Eigen::MatrixXd z_distance;  // (value - mean) / sqrt(OOD variance)
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> outside;

  std::size_t length() const { return static_cast<std::size_t>(value.rows()); }
  std::size_t dims() const { return static_cast<std::size_t>(value.cols()); }
  double ood_fraction() const;
};

double normal_pdf(double x, double mean, double variance);

// Scores a trajectory that already lives on the envelope grid.
ScoreBreakdown score_aligned(const EnvelopeGrid& grid, const AlignedLatentSequence& test,
                             const ScoringOptions& options = {});
double score_pd(const MotionEnvelope& envelope, const AlignedLatentSequence& test, const ScoringOptions& options = {});
std::size_t score_ood(const MotionEnvelope& envelope, const AlignedLatentSequence& test,
                      const ScoringOptions& options = {});

// Aligns a raw production to the envelope's reference, then scores it.
ScoreBreakdown assess(const MotionEnvelope& envelope, const LatentSequence& test, const ScoringOptions& options = {});
ScoreBreakdown assess(const MotionEnvelope& envelope, const EnvelopeGrid& grid, const LatentSequence& test,
                      const ScoringOptions& options = {});

struct Anomaly {
  std::size_t dimension = 0;
  std::size_t t_start = 0;
  std::size_t t_end = 0;  // inclusive
  std::size_t peak_t = 0;
  double peak_z = 0.0;
};

// Maximal runs of outside points per dimension, at least min_run long.
std::vector<Anomaly> locate_anomalies(const ScoreBreakdown& breakdown, std::size_t min_run = 3);

nlohmann::json to_json(const ScoreBreakdown& breakdown, const std::vector<Anomaly>& anomalies,
                       const ScoringOptions& options);
// Columns: t, d, value, mean, var_f, var_pred, outside
std::string points_csv(const ScoreBreakdown& breakdown);
// Rebuilds the grids of a breakdown from points_csv output. Densities and
// z-distances are not restored.
ScoreBreakdown breakdown_from_points_csv(std::string_view text);

}  // namespace menv
