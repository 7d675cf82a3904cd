#include <doctest.h>

#include <algorithm>

#include <random>

#include "menv/alignment.hpp"
#include "menv/error.hpp"
#include "menv/synth.hpp"
#include "oracles.hpp"

using namespace menv;

namespace {

LatentSequence seq_of(const std::string& signer, const Eigen::MatrixXd& mu) {
  return LatentSequence{"s00", signer, mu, 0.1 * mu};
}

WarpPath random_path(std::mt19937_64& rng, std::size_t n, std::size_t m) {
  WarpPath p;
  std::size_t i = 0, j = 0;
  p.steps.emplace_back(0, 0);
  std::uniform_int_distribution<int> pick(0, 2);
  while (i + 1 < n || j + 1 < m) {
    int s = pick(rng);
    if (i + 1 == n) s = 1;
    if (j + 1 == m) s = 0;
    if (s == 0) ++i;
    else if (s == 1) ++j;
    else ++i, ++j;
    p.steps.emplace_back(i, j);
  }
  return p;
}

}  // namespace

TEST_CASE("identical sequences align on the diagonal at zero cost") {
  const Eigen::MatrixXd a = Eigen::MatrixXd::Random(30, 10);
  for (std::size_t radius : {1u, 5u, 20u}) {
    const DtwResult r = dtw(a, a, radius);
    CHECK(r.cost == 0.0);
    REQUIRE(r.path.steps.size() == 30);
    for (std::size_t t = 0; t < 30; ++t) CHECK(r.path.steps[t] == std::pair<std::size_t, std::size_t>{t, t});
  }
}

TEST_CASE("a repeated frame is absorbed") {
  Eigen::MatrixXd ref(3, 1), test(4, 1);
  ref << 1, 2, 3;
  test << 1, 2, 2, 3;
  const DtwResult r = dtw(ref, test);
  CHECK(r.cost == 0.0);
  for (const auto& [i, j] : r.path.steps)
    if (j == 1 || j == 2) CHECK(i == 1);
}

TEST_CASE("dtw against the brute-force oracle") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> len(2, 50);
  double worst_ratio = 1.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::MatrixXd a = oracle::random_walk(rng, len(rng), 10), b = oracle::random_walk(rng, len(rng), 10);
    const double exact = oracle::dtw_cost(a, b);
    const std::size_t longest = static_cast<std::size_t>(std::max(a.rows(), b.rows()));
    CHECK(dtw_full(a, b).cost == exact);
    CHECK(dtw(a, b, longest).cost == exact);
    const DtwResult r20 = dtw(a, b, 20);
    check_warp_path(r20.path, static_cast<std::size_t>(a.rows()), static_cast<std::size_t>(b.rows()));
    CHECK(r20.cost >= exact * (1 - 1e-12));
    worst_ratio = std::max(worst_ratio, r20.cost / exact);
    // symmetric cost under the full program
    CHECK(dtw_full(b, a).cost == doctest::Approx(exact).epsilon(1e-12));
  }
  CHECK(worst_ratio <= 1.05);
}

TEST_CASE("full DP matches exhaustive path enumeration on tiny inputs") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::MatrixXd a = oracle::random_walk(rng, 2 + trial % 5, 3), b = oracle::random_walk(rng, 2 + trial % 6, 3);
    CHECK(dtw_full(a, b).cost == doctest::Approx(oracle::dtw_cost_exhaustive(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("multiscale path on long sequences stays close to optimal") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::MatrixXd a = oracle::random_walk(rng, 150 + 10 * trial, 10),
                          b = oracle::random_walk(rng, 130 + 12 * trial, 10);
    const double exact = oracle::dtw_cost(a, b);
    const DtwResult r = dtw(a, b, 20);
    check_warp_path(r.path, static_cast<std::size_t>(a.rows()), static_cast<std::size_t>(b.rows()));
    double along = 0.0;
    for (const auto& [i, j] : r.path.steps)
      along += (a.row(static_cast<Eigen::Index>(i)) - b.row(static_cast<Eigen::Index>(j))).norm();
    CHECK(along == doctest::Approx(r.cost).epsilon(1e-12));
    CHECK(r.cost <= 1.05 * exact);
  }
}

TEST_CASE("dtw input errors") {
  CHECK_THROWS_AS(dtw(Eigen::MatrixXd(0, 3), Eigen::MatrixXd::Ones(3, 3)), InvalidArgument);
  CHECK_THROWS_AS(dtw(Eigen::MatrixXd::Ones(3, 2), Eigen::MatrixXd::Ones(3, 3)), InvalidArgument);
}

TEST_CASE("warp path validation") {
  WarpPath bad{{{0, 0}, {2, 1}}};
  CHECK_THROWS_AS(check_warp_path(bad, 3, 2), InvalidArgument);
  WarpPath short_end{{{0, 0}, {1, 1}}};
  CHECK_THROWS_AS(check_warp_path(short_end, 3, 2), InvalidArgument);
  WarpPath backwards{{{0, 0}, {1, 1}, {1, 0}, {2, 1}}};
  CHECK_THROWS_AS(check_warp_path(backwards, 3, 2), InvalidArgument);
}

TEST_CASE("apply_warp") {
  const auto test = seq_of("t", Eigen::MatrixXd::Random(5, 4));
  SUBCASE("diagonal keeps the sequence") {
    WarpPath diag;
    for (std::size_t t = 0; t < 5; ++t) diag.steps.emplace_back(t, t);
    const auto out = apply_warp(diag, test, 5);
    CHECK(out.mu == test.mu);
    CHECK(out.logvar == test.logvar);
  }
  SUBCASE("many-to-one takes the mean") {
    WarpPath p{{{0, 0}, {1, 1}, {1, 2}, {2, 3}, {3, 4}}};
    const auto out = apply_warp(p, test, 4);
    CHECK((out.mu.row(1) - 0.5 * (test.mu.row(1) + test.mu.row(2))).norm() < 1e-15);
  }
  SUBCASE("random valid paths always give the reference length") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t n = 2 + static_cast<std::size_t>(trial % 9);
      const WarpPath p = random_path(rng, n, 5);
      check_warp_path(p, n, 5);
      CHECK(apply_warp(p, test, n).length() == n);
    }
  }
  SUBCASE("invalid path is rejected") {
    CHECK_THROWS_AS(apply_warp(WarpPath{{{0, 0}, {1, 1}}}, test, 2), InvalidArgument);
  }
}

TEST_CASE("corpus alignment") {
  const auto proto = gen_prototype(4, "s00", 120, 6);
  LatentCorpus corpus;
  SignerStyle base = identity_style(6);
  SignerStyle slow = identity_style(6);
  slow.tempo = 0.8;
  SignerStyle other = sample_style(9, 6, 0.0);
  corpus[{"s00", "n00"}] = seq_of("n00", production_channels(proto, base).transpose());
  corpus[{"s00", "n01"}] = seq_of("n01", production_channels(proto, slow).transpose());
  corpus[{"s00", "n02"}] = seq_of("n02", production_channels(proto, other).transpose());
  ReferenceChoice ref;
  ref.sentence_id = "s00";
  ref.reference_signer = "n00";

  const AlignedCorpus out = align_corpus(corpus, {ref}, 20, 2);
  REQUIRE(out.size() == 3);
  CHECK(out.at({"s00", "n00"}).mu == corpus.at({"s00", "n00"}).mu);
  CHECK(out.at({"s00", "n00"}).logvar == corpus.at({"s00", "n00"}).logvar);
  for (const auto& [key, seq] : out) {
    CHECK(seq.length() == 120);
    CHECK(seq.reference_signer == "n00");
  }

  // A slowed production lands closer to the reference than its raw frames do
  // (held at the last frame past its end).
  const Eigen::MatrixXd& r = corpus.at({"s00", "n00"}).mu;
  const Eigen::MatrixXd& raw = corpus.at({"s00", "n01"}).mu;
  double before = 0.0;
  for (Eigen::Index t = 0; t < r.rows(); ++t) before += (raw.row(std::min(t, raw.rows() - 1)) - r.row(t)).norm();
  before /= static_cast<double>(r.rows());
  const double after = (out.at({"s00", "n01"}).mu - r).rowwise().norm().mean();
  CHECK(after < before);

  // Self-alignment through the public function is exact too.
  const auto self = align_to_reference(corpus.at({"s00", "n00"}), corpus.at({"s00", "n00"}));
  CHECK(self.mu == r);

  ReferenceChoice missing;
  missing.sentence_id = "s00";
  missing.reference_signer = "n99";
  CHECK_THROWS_AS(align_corpus(corpus, {missing}), InvalidArgument);
}
