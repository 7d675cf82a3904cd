#include "menv/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "menv/error.hpp"

namespace menv {

using nlohmann::json;

void check_record(const RatingRecord& r) {
  if (r.components.empty())
    throw InvalidArgument("rating by '" + r.rater_id + "' for (" + r.sentence_id + ", " + r.signer_id +
                          ") has no components");
  for (int c : r.components)
    if (c < 1 || c > 3)
      throw RangeError("rating component " + std::to_string(c) + " by '" + r.rater_id + "' is outside {1,2,3}");
}

namespace {

double component_mean(const RatingRecord& r) {
  check_record(r);
  return std::accumulate(r.components.begin(), r.components.end(), 0.0) / static_cast<double>(r.components.size());
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

void check_pair(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw InvalidArgument("paired samples differ in length");
  if (x.size() < 3) throw InvalidArgument("correlation needs at least 3 pairs");
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw NumericError("non-finite value in paired samples");
}

}  // namespace

std::map<EntryKey, double> aggregate_ratings(const std::vector<RatingRecord>& records) {
  std::map<EntryKey, std::vector<double>> by_key;
  for (const auto& r : records) by_key[{r.sentence_id, r.signer_id}].push_back(component_mean(r));
  std::map<EntryKey, double> out;
  for (const auto& [key, means] : by_key) out[key] = mean_of(means);
  return out;
}

std::map<EntryKey, double> rater_standardized_ratings(const std::vector<RatingRecord>& records) {
  std::vector<double> values;
  std::vector<std::string> raters;
  for (const auto& r : records) {
    values.push_back(component_mean(r));
    raters.push_back(r.rater_id);
  }
  const std::vector<double> z = zscore(values, raters);
  std::map<EntryKey, std::vector<double>> by_key;
  for (std::size_t i = 0; i < records.size(); ++i) by_key[{records[i].sentence_id, records[i].signer_id}].push_back(z[i]);
  std::map<EntryKey, double> out;
  for (const auto& [key, v] : by_key) out[key] = mean_of(v);
  return out;
}

std::map<EntryKey, double> proxy_ratings(const std::vector<LearnerTruth>& truth) {
  std::map<EntryKey, double> out;
  for (const auto& t : truth) out[{t.sentence, t.signer}] = std::clamp(3.0 - t.deviation.delta, 1.0, 3.0);
  return out;
}

std::vector<RatingRecord> simulate_ratings(const std::vector<LearnerTruth>& truth, std::size_t raters,
                                           std::size_t components, double noise_std, std::uint64_t seed) {
  if (raters < 1 || components < 1) throw InvalidArgument("simulated ratings need raters and components");
  std::vector<RatingRecord> out;
  for (std::size_t r = 0; r < raters; ++r) {
    const std::string rater = "r" + std::to_string(r);
    for (const auto& t : truth) {
      std::mt19937_64 rng(derive_seed(seed, t.sentence, t.signer + "/" + rater));
      std::normal_distribution<double> noise(0.0, noise_std);
      RatingRecord rec{rater, t.signer, t.sentence, {}};
      for (std::size_t c = 0; c < components; ++c) {
        const double v = 3.0 - t.deviation.delta + (noise_std > 0.0 ? noise(rng) : 0.0);
        rec.components.push_back(static_cast<int>(std::clamp(std::lround(v), 1L, 3L)));
      }
      out.push_back(std::move(rec));
    }
  }
  return out;
}

std::vector<RatingRecord> ratings_from_json(const json& j) {
  try {
    std::vector<RatingRecord> out;
    for (const auto& e : j.at("ratings")) {
      RatingRecord r{e.at("rater").get<std::string>(), e.at("signer").get<std::string>(),
                     e.at("sentence").get<std::string>(), e.at("components").get<std::vector<int>>()};
      check_record(r);
      out.push_back(std::move(r));
    }
    return out;
  } catch (const json::exception& e) {
    throw ParseError(std::string("invalid ratings file: ") + e.what());
  }
}

json to_json(const std::vector<RatingRecord>& records) {
  json list = json::array();
  for (const auto& r : records)
    list.push_back(
        json{{"rater", r.rater_id}, {"signer", r.signer_id}, {"sentence", r.sentence_id}, {"components", r.components}});
  return json{{"ratings", list}};
}

std::vector<double> zscore(const std::vector<double>& values, const std::vector<std::string>& groups) {
  if (values.size() != groups.size()) throw InvalidArgument("zscore: values and group labels differ in length");
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < values.size(); ++i) members[groups[i]].push_back(i);
  std::vector<double> out(values.size());
  for (const auto& [group, idx] : members) {
    if (idx.size() < 2) throw DegenerateInput("z-score group '" + group + "' has fewer than 2 values");
    double m = 0.0;
    for (auto i : idx) m += values[i];
    m /= static_cast<double>(idx.size());
    double ss = 0.0;
    for (auto i : idx) ss += (values[i] - m) * (values[i] - m);
    const double sd = std::sqrt(ss / static_cast<double>(idx.size() - 1));
    if (!(sd > 0.0)) throw DegenerateInput("z-score group '" + group + "' has zero variance");
    for (auto i : idx) out[i] = (values[i] - m) / sd;
  }
  return out;
}

std::vector<double> zscore(const std::vector<double>& values) {
  return zscore(values, std::vector<std::string>(values.size(), "all"));
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  check_pair(x, y);
  const double mx = mean_of(x), my = mean_of(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw DegenerateInput("correlation of a constant variable");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double standardized_beta(const std::vector<double>& x, const std::vector<double>& y) {
  check_pair(x, y);
  const std::vector<double> zx = zscore(x), zy = zscore(y);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < zx.size(); ++i) {
    sxy += zx[i] * zy[i];
    sxx += zx[i] * zx[i];
  }
  return sxy / sxx;
}

std::vector<double> average_ranks(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t a = 0; a < n;) {
    std::size_t b = a;
    while (b + 1 < n && values[order[b + 1]] == values[order[a]]) ++b;
    const double r = 0.5 * static_cast<double>(a + b) + 1.0;
    for (std::size_t c = a; c <= b; ++c) ranks[order[c]] = r;
    a = b + 1;
  }
  return ranks;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  check_pair(x, y);
  return pearson(average_ranks(x), average_ranks(y));
}

EvaluationReport evaluate_run(const std::vector<SystemScore>& scores, const std::map<EntryKey, double>& manual) {
  std::map<std::string, std::vector<const SystemScore*>> by_sentence;
  for (const auto& s : scores)
    if (manual.count({s.sentence_id, s.signer_id})) by_sentence[s.sentence_id].push_back(&s);
  if (by_sentence.empty()) throw InvalidArgument("no (sentence, learner) pair has both a system score and a rating");

  EvaluationReport report;
  for (const auto& [sentence, list] : by_sentence) {
    if (list.size() < 3)
      throw InvalidArgument("sentence '" + sentence + "' has only " + std::to_string(list.size()) +
                            " rated productions; need at least 3");
    std::vector<double> pd, ood, rating;
    for (const auto* s : list) {
      pd.push_back(s->pd_measure);
      ood.push_back(s->ood_count);
      rating.push_back(manual.at({s->sentence_id, s->signer_id}));
    }
    SentenceEvaluation e;
    e.sentence_id = sentence;
    e.pairs = list.size();
    const std::vector<double> z_rating = zscore(rating);
    e.beta_pd = standardized_beta(zscore(pd), z_rating);
    e.beta_ood = standardized_beta(zscore(ood), z_rating);
    e.srcc_pd = spearman(pd, rating);
    e.srcc_ood = spearman(ood, rating);
    report.sentences.push_back(e);
  }
  const double n = static_cast<double>(report.sentences.size());
  for (const auto& e : report.sentences) {
    report.mean_beta_pd += e.beta_pd / n;
    report.mean_beta_ood += e.beta_ood / n;
    report.mean_srcc_pd += e.srcc_pd / n;
    report.mean_srcc_ood += e.srcc_ood / n;
  }
  return report;
}

json to_json(const EvaluationReport& report) {
  json beta = json::array(), srcc = json::array();
  for (const auto& e : report.sentences) {
    beta.push_back(json{{"sentence", e.sentence_id}, {"pairs", e.pairs}, {"pd_measure", e.beta_pd},
                        {"ood_count", e.beta_ood}});
    srcc.push_back(json{{"sentence", e.sentence_id}, {"pairs", e.pairs}, {"pd_measure", e.srcc_pd},
                        {"ood_count", e.srcc_ood}});
  }
  return json{
      {"standardized_beta",
       {{"rows", beta}, {"mean", {{"pd_measure", report.mean_beta_pd}, {"ood_count", report.mean_beta_ood}}}}},
      {"spearman",
       {{"rows", srcc}, {"mean", {{"pd_measure", report.mean_srcc_pd}, {"ood_count", report.mean_srcc_ood}}}}}};
}

}  // namespace menv
