#include "menv/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <nlohmann/json.hpp>

#include "menv/error.hpp"
#include "menv/text_io.hpp"

namespace menv {

using nlohmann::json;

const char* to_string(VarianceKind kind) { return kind == VarianceKind::kFunction ? "function" : "predictive"; }

VarianceKind variance_kind_from_string(const std::string& text) {
  if (text == "function") return VarianceKind::kFunction;
  if (text == "predictive") return VarianceKind::kPredictive;
  throw ConfigError("unknown variance kind '" + text + "' (expected function or predictive)");
}

void ScoringOptions::validate() const {
  if (!(z > 0.0) || !std::isfinite(z)) throw ConfigError("scoring.z must be positive");
  if (min_run < 1) throw ConfigError("scoring.min_run must be >= 1");
}

json to_json(const ScoringOptions& o) {
  return json{{"pd_variance", to_string(o.pd_variance)},
              {"ood_variance", to_string(o.ood_variance)},
              {"z", o.z},
              {"min_run", o.min_run},
              {"dtw_radius", o.dtw_radius}};
}

ScoringOptions scoring_options_from_json(const json& j, ScoringOptions o) {
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "pd_variance") o.pd_variance = variance_kind_from_string(value.get<std::string>());
      else if (key == "ood_variance") o.ood_variance = variance_kind_from_string(value.get<std::string>());
      else if (key == "z") o.z = value.get<double>();
      else if (key == "min_run") o.min_run = json_count(value, "scoring.min_run");
      else if (key == "dtw_radius") o.dtw_radius = json_count(value, "scoring.dtw_radius");
      else throw ConfigError("unknown scoring option '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid scoring config: ") + e.what());
  }
  o.validate();
  return o;
}

double ScoreBreakdown::ood_fraction() const {
  return value.size() == 0 ? 0.0 : static_cast<double>(ood_count) / static_cast<double>(value.size());
}

double normal_pdf(double x, double mean, double variance) {
  const double d = x - mean;
  return std::exp(-0.5 * d * d / variance) / std::sqrt(2.0 * std::numbers::pi * variance);
}

ScoreBreakdown score_aligned(const EnvelopeGrid& grid, const AlignedLatentSequence& test,
                             const ScoringOptions& options) {
  options.validate();
  if (test.mu.rows() != grid.mean.rows() || test.mu.cols() != grid.mean.cols())
    throw InvalidArgument("test trajectory is " + std::to_string(test.mu.rows()) + "x" +
                          std::to_string(test.mu.cols()) + " but the envelope grid is " +
                          std::to_string(grid.mean.rows()) + "x" + std::to_string(grid.mean.cols()));
  ScoreBreakdown b;
  b.sentence_id = test.sentence_id;
  b.signer_id = test.signer_id;
  b.value = test.mu;
  b.mean = grid.mean;
  b.var_f = grid.var_f;
  b.var_pred = grid.var_pred;
  const auto rows = b.value.rows(), cols = b.value.cols();
  b.density.resize(rows, cols);
  b.z_distance.resize(rows, cols);
  b.outside.resize(rows, cols);
  const Eigen::MatrixXd& pd_var = options.pd_variance == VarianceKind::kPredictive ? b.var_pred : b.var_f;
  const Eigen::MatrixXd& ood_var = options.ood_variance == VarianceKind::kPredictive ? b.var_pred : b.var_f;
  double density_sum = 0.0, log_sum = 0.0;
  for (Eigen::Index t = 0; t < rows; ++t) {
    for (Eigen::Index d = 0; d < cols; ++d) {
      const double x = b.value(t, d), m = b.mean(t, d);
      const double dens = normal_pdf(x, m, pd_var(t, d));
      b.density(t, d) = dens;
      density_sum += dens;
      log_sum += std::log(std::max(dens, std::numeric_limits<double>::min()));
      const double sd = std::sqrt(ood_var(t, d));
      b.z_distance(t, d) = sd > 0.0 ? (x - m) / sd : (x == m ? 0.0 : std::copysign(HUGE_VAL, x - m));
      const auto [lo, hi] = confidence_region(m, ood_var(t, d), options.z);
      b.outside(t, d) = x < lo || x > hi;
      if (b.outside(t, d)) ++b.ood_count;
    }
  }
  const double n = static_cast<double>(rows * cols);
  b.pd_measure = density_sum / n;
  b.mean_log_density = log_sum / n;
  return b;
}

double score_pd(const MotionEnvelope& envelope, const AlignedLatentSequence& test, const ScoringOptions& options) {
  return score_aligned(envelope_grid(envelope), test, options).pd_measure;
}

std::size_t score_ood(const MotionEnvelope& envelope, const AlignedLatentSequence& test,
                      const ScoringOptions& options) {
  return score_aligned(envelope_grid(envelope), test, options).ood_count;
}

ScoreBreakdown assess(const MotionEnvelope& envelope, const EnvelopeGrid& grid, const LatentSequence& test,
                      const ScoringOptions& options) {
  if (test.sentence_id != envelope.sentence_id)
    throw InvalidArgument("production of sentence '" + test.sentence_id + "' scored against envelope '" +
                          envelope.sentence_id + "'");
  LatentSequence ref;
  ref.sentence_id = envelope.sentence_id;
  ref.signer_id = envelope.reference_signer;
  ref.mu = reference_trajectory(envelope);
  ref.logvar = Eigen::MatrixXd::Zero(ref.mu.rows(), ref.mu.cols());
  const AlignedLatentSequence aligned = align_to_reference(ref, test, options.dtw_radius);
  return score_aligned(grid, aligned, options);
}

ScoreBreakdown assess(const MotionEnvelope& envelope, const LatentSequence& test, const ScoringOptions& options) {
  return assess(envelope, envelope_grid(envelope), test, options);
}

std::vector<Anomaly> locate_anomalies(const ScoreBreakdown& b, std::size_t min_run) {
  if (min_run < 1) throw InvalidArgument("min_run must be >= 1");
  std::vector<Anomaly> out;
  const auto rows = b.outside.rows();
  for (Eigen::Index d = 0; d < b.outside.cols(); ++d) {
    Eigen::Index t = 0;
    while (t < rows) {
      if (!b.outside(t, d)) {
        ++t;
        continue;
      }
      Eigen::Index end = t;
      while (end + 1 < rows && b.outside(end + 1, d)) ++end;
      if (static_cast<std::size_t>(end - t + 1) >= min_run) {
        Anomaly a{static_cast<std::size_t>(d), static_cast<std::size_t>(t), static_cast<std::size_t>(end),
                  static_cast<std::size_t>(t), b.z_distance(t, d)};
        for (Eigen::Index s = t + 1; s <= end; ++s)
          if (std::abs(b.z_distance(s, d)) > std::abs(a.peak_z)) {
            a.peak_t = static_cast<std::size_t>(s);
            a.peak_z = b.z_distance(s, d);
          }
        out.push_back(a);
      }
      t = end + 1;
    }
  }
  return out;
}

json to_json(const ScoreBreakdown& b, const std::vector<Anomaly>& anomalies, const ScoringOptions& options) {
  json list = json::array();
  for (const auto& a : anomalies) {
    const double z = std::isfinite(a.peak_z) ? a.peak_z : std::copysign(std::numeric_limits<double>::max(), a.peak_z);
    list.push_back(json{{"dimension", a.dimension},
                        {"t_start", a.t_start},
                        {"t_end", a.t_end},
                        {"peak_t", a.peak_t},
                        {"peak_z", z}});
  }
  return json{{"sentence", b.sentence_id},
              {"signer", b.signer_id},
              {"length", b.length()},
              {"dims", b.dims()},
              {"pd_measure", b.pd_measure},
              {"ood_count", b.ood_count},
              {"ood_fraction", b.ood_fraction()},
              {"mean_log_density", b.mean_log_density},
              {"options", to_json(options)},
              {"anomalies", list}};
}

std::string points_csv(const ScoreBreakdown& b) {
  std::string out = "t,d,value,mean,var_f,var_pred,outside\n";
  for (Eigen::Index t = 0; t < b.value.rows(); ++t)
    for (Eigen::Index d = 0; d < b.value.cols(); ++d) {
      out += std::to_string(t) + ',' + std::to_string(d) + ',' + format_double(b.value(t, d)) + ',' +
             format_double(b.mean(t, d)) + ',' + format_double(b.var_f(t, d)) + ',' +
             format_double(b.var_pred(t, d)) + ',' + (b.outside(t, d) ? "1" : "0") + '\n';
    }
  return out;
}

ScoreBreakdown breakdown_from_points_csv(std::string_view text) {
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 0, t_len = 0, dims = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || (line_no == 1 && line.rfind("t,", 0) == 0)) continue;
    auto row = parse_csv_row(line, line_no);
    if (row.size() != 7) throw DimensionError("expected 7 columns, got " + std::to_string(row.size()), line_no);
    if (row[0] < 0 || row[1] < 0 || row[0] != std::floor(row[0]) || row[1] != std::floor(row[1]))
      throw ParseError("t and d must be non-negative integers", line_no);
    t_len = std::max(t_len, static_cast<std::size_t>(row[0]) + 1);
    dims = std::max(dims, static_cast<std::size_t>(row[1]) + 1);
    rows.push_back(std::move(row));
  }
  if (rows.size() != t_len * dims || rows.empty()) throw ParseError("points file does not cover a full t x d grid");
  ScoreBreakdown b;
  const auto r = static_cast<Eigen::Index>(t_len), c = static_cast<Eigen::Index>(dims);
  b.value.resize(r, c);
  b.mean.resize(r, c);
  b.var_f.resize(r, c);
  b.var_pred.resize(r, c);
  b.outside.setConstant(r, c, false);
  b.density = Eigen::MatrixXd::Zero(r, c);
  b.z_distance = Eigen::MatrixXd::Zero(r, c);
  for (const auto& row : rows) {
    const auto t = static_cast<Eigen::Index>(row[0]), d = static_cast<Eigen::Index>(row[1]);
    b.value(t, d) = row[2];
    b.mean(t, d) = row[3];
    b.var_f(t, d) = row[4];
    b.var_pred(t, d) = row[5];
    b.outside(t, d) = row[6] != 0.0;
    if (b.outside(t, d)) ++b.ood_count;
  }
  return b;
}

}  // namespace menv
