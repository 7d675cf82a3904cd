#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "menv/error.hpp"
#include "menv/evaluation.hpp"
#include "oracles.hpp"

using namespace menv;

namespace {

std::vector<LearnerTruth> truth_for(const std::vector<double>& deltas, const std::string& sentence = "s00") {
  std::vector<LearnerTruth> out;
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    LearnerTruth t;
    t.sentence = sentence;
    t.signer = learner_name(i);
    t.deviation.delta = deltas[i];
    out.push_back(t);
  }
  return out;
}

}  // namespace

TEST_CASE("rating aggregation") {
  CHECK(aggregate_ratings({{"r0", "l00", "s00", {2, 2, 2}}}).at({"s00", "l00"}) == 2.0);
  const auto two = aggregate_ratings({{"r0", "l00", "s00", {1, 1}}, {"r1", "l00", "s00", {3, 3, 3}}});
  CHECK(two.at({"s00", "l00"}) == 2.0);
  CHECK_THROWS_AS(aggregate_ratings({{"r0", "l00", "s00", {4}}}), RangeError);
  CHECK_THROWS_AS(aggregate_ratings({{"r0", "l00", "s00", {}}}), InvalidArgument);

  const auto truth = truth_for({0, 0, 0.5, 0.5, 1, 1, 2, 2});
  const auto proxy = proxy_ratings(truth);
  CHECK(proxy.at({"s00", "l00"}) == 3.0);
  CHECK(proxy.at({"s00", "l06"}) == 1.0);

  // Simulated panels land near the noiseless proxy.
  int close = 0, total = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto agg = aggregate_ratings(simulate_ratings(truth, 5, 3, 0.3, seed));
    for (const auto& [key, v] : proxy) {
      ++total;
      if (std::abs(agg.at(key) - v) <= 0.5) ++close;
    }
  }
  CHECK(close >= 0.9 * total);
  CHECK(simulate_ratings(truth, 2, 3, 0.3, 7).size() == 16);

  const auto recs = simulate_ratings(truth, 3, 2, 0.5, 9);
  const auto round_trip = ratings_from_json(to_json(recs));
  REQUIRE(round_trip.size() == recs.size());
  CHECK(round_trip[5].components == recs[5].components);
  CHECK_THROWS_AS(ratings_from_json(nlohmann::json{{"ratings", {{{"rater", "a"}}}}}), ParseError);
}

TEST_CASE("rater standardization") {
  // r1 rates harsher on a compressed scale; the ordering survives standardization.
  std::vector<RatingRecord> recs;
  const int base[] = {3, 2, 1, 2};
  for (int i = 0; i < 4; ++i) {
    recs.push_back({"r0", learner_name(static_cast<std::size_t>(i)), "s00", {base[i]}});
    recs.push_back({"r1", learner_name(static_cast<std::size_t>(i)), "s00", {std::max(1, base[i] - (i == 2 ? 0 : 1))}});
  }
  const auto z = rater_standardized_ratings(recs);
  CHECK(z.size() == 4);
  CHECK(z.at({"s00", "l00"}) > z.at({"s00", "l01"}));
  CHECK(z.at({"s00", "l01"}) > z.at({"s00", "l02"}));
}

TEST_CASE("z-scores") {
  const auto z = zscore({1, 2, 3});
  CHECK(z[0] == doctest::Approx(-1.0));
  CHECK(z[1] == doctest::Approx(0.0));
  CHECK(z[2] == doctest::Approx(1.0));

  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(3.0, 2.0);
  std::vector<double> v(40);
  std::vector<std::string> g(40);
  for (std::size_t i = 0; i < 40; ++i) {
    v[i] = n(rng);
    g[i] = i % 3 == 0 ? "a" : "b";
  }
  const auto once = zscore(v, g), twice = zscore(once, g);
  for (std::size_t i = 0; i < 40; ++i) CHECK(std::abs(once[i] - twice[i]) < 1e-12);
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < 40; ++i) (g[i] == "a" ? ma : mb) += once[i];
  CHECK(std::abs(ma) < 1e-12);
  CHECK(std::abs(mb) < 1e-12);

  try {
    zscore({1, 1, 2, 3}, {"flat", "flat", "x", "x"});
    FAIL("expected DegenerateInput");
  } catch (const DegenerateInput& e) {
    CHECK(std::string(e.what()).find("flat") != std::string::npos);
  }
  CHECK_THROWS_AS(zscore({1.0}), DegenerateInput);
}

TEST_CASE("correlation statistics") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  std::vector<double> neg(x.size());
  std::transform(x.begin(), x.end(), neg.begin(), [](double v) { return -v; });
  CHECK(pearson(x, x) == doctest::Approx(1.0));
  CHECK(pearson(x, neg) == doctest::Approx(-1.0));
  CHECK(standardized_beta(x, x) == doctest::Approx(1.0));
  CHECK(standardized_beta(x, neg) == doctest::Approx(-1.0));
  CHECK(spearman(x, {1, 4, 9, 16, 25}) == 1.0);
  CHECK(spearman(x, {10, 8, 6, 4, 2}) == -1.0);
  CHECK(average_ranks({3, 1, 3, 2}) == std::vector<double>{3.5, 1, 3.5, 2});

  std::mt19937_64 rng(4);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(12), b(12);
    for (std::size_t i = 0; i < 12; ++i) {
      a[i] = n(rng);
      b[i] = std::round(2 * (0.5 * a[i] + n(rng)));  // ties on purpose
    }
    CHECK(pearson(a, b) == doctest::Approx(oracle::pearson(a, b)).epsilon(1e-12));
    CHECK(spearman(a, b) == doctest::Approx(oracle::spearman(a, b)).epsilon(1e-12));
    CHECK(std::abs(standardized_beta(a, b) - pearson(zscore(a), zscore(b))) < 1e-10);
  }
  CHECK_THROWS_AS(pearson({1, 2}, {1, 2}), InvalidArgument);
  CHECK_THROWS_AS(pearson({1, 1, 1}, {1, 2, 3}), DegenerateInput);
  CHECK_THROWS_AS(pearson({1, 2, NAN}, {1, 2, 3}), NumericError);
}

TEST_CASE("evaluate_run") {
  const auto truth = truth_for({0, 0, 0.5, 0.5, 1, 1, 2, 2});
  SUBCASE("scores that track the ratings") {
    const auto manual = proxy_ratings(truth);
    std::vector<SystemScore> scores;
    for (const auto& [key, v] : manual) scores.push_back({key.first, key.second, v, 3.0 - v});
    const EvaluationReport r = evaluate_run(scores, manual);
    REQUIRE(r.sentences.size() == 1);
    CHECK(r.sentences[0].pairs == 8);
    CHECK(r.mean_beta_pd == doctest::Approx(1.0));
    CHECK(r.mean_srcc_pd == doctest::Approx(1.0));
    CHECK(r.mean_srcc_ood == doctest::Approx(-1.0));
    const auto j = to_json(r);
    CHECK(j.at("spearman").at("mean").at("pd_measure").get<double>() == doctest::Approx(1.0));
  }
  SUBCASE("shuffled pairings are mostly uncorrelated") {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> n;
    // Under the null at n = 10, |SRCC| < 0.5 holds ~86% of the time and the
    // two-sided 5% critical value is ~0.648.
    int small = 0, below_critical = 0;
    for (int trial = 0; trial < 400; ++trial) {
      std::map<EntryKey, double> manual;
      std::vector<SystemScore> scores;
      for (std::size_t i = 0; i < 10; ++i) {
        manual[{"s00", learner_name(i)}] = n(rng);
        scores.push_back({"s00", learner_name(i), n(rng), n(rng)});
      }
      const double rho = std::abs(evaluate_run(scores, manual).mean_srcc_pd);
      if (rho < 0.5) ++small;
      if (rho < 0.648) ++below_critical;
    }
    CHECK(small >= 0.8 * 400);
    CHECK(below_critical >= 0.93 * 400);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(evaluate_run({}, proxy_ratings(truth)), InvalidArgument);
    std::vector<SystemScore> two{{"s00", "l00", 1, 1}, {"s00", "l01", 2, 2}};
    CHECK_THROWS_AS(evaluate_run(two, proxy_ratings(truth)), InvalidArgument);
  }
}
