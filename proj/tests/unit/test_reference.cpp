#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "menv/alignment.hpp"
#include "menv/error.hpp"
#include "menv/reference.hpp"
#include "menv/synth.hpp"
#include "oracles.hpp"

using namespace menv;

namespace {

LatentSequence seq_of(const std::string& signer, const Eigen::MatrixXd& mu) {
  return LatentSequence{"s00", signer, mu, Eigen::MatrixXd::Zero(mu.rows(), mu.cols())};
}

}  // namespace

TEST_CASE("resampling") {
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(9, 3);
  CHECK(resample_latents(x, 9) == x);
  CHECK((resample_latents(Eigen::MatrixXd::Constant(7, 2, 1.5), 13).array() == 1.5).all());
  Eigen::MatrixXd ramp(11, 1);
  for (int i = 0; i < 11; ++i) ramp(i, 0) = i / 10.0;
  const Eigen::MatrixXd r = resample_latents(ramp, 6);
  for (int i = 0; i < 6; ++i) CHECK(r(i, 0) == doctest::Approx(0.2 * i).epsilon(1e-12));
  const Eigen::MatrixXd up = resample_latents(x, 20);
  CHECK(up.row(0) == x.row(0));
  CHECK(up.row(19) == x.row(8));
  CHECK_THROWS_AS(resample_latents(x, 1), InvalidArgument);
}

TEST_CASE("cosine similarity") {
  Eigen::VectorXd a(2), b(2), c(2);
  a << 1, 0;
  b << 0, 1;
  c << 1, 1;
  CHECK(cosine_similarity(c, c) == doctest::Approx(1.0));
  CHECK(cosine_similarity(a, b) == doctest::Approx(0.0));
  CHECK(cosine_similarity(c, a) == doctest::Approx(std::sqrt(2.0) / 2.0));
  CHECK_THROWS_AS(cosine_similarity(Eigen::VectorXd::Zero(2), a), DegenerateInput);
}

TEST_CASE("median length is the lower median") {
  const auto a = seq_of("a", Eigen::MatrixXd::Ones(10, 2)), b = seq_of("b", Eigen::MatrixXd::Ones(20, 2)),
             c = seq_of("c", Eigen::MatrixXd::Ones(30, 2)), d = seq_of("d", Eigen::MatrixXd::Ones(40, 2));
  CHECK(median_length({&a, &b, &c}) == 20);
  CHECK(median_length({&a, &b, &c, &d}) == 20);
}

TEST_CASE("reference selection") {
  SUBCASE("two productions tie and the first wins") {
    const auto a = seq_of("a", Eigen::MatrixXd::Random(10, 3)), b = seq_of("b", Eigen::MatrixXd::Random(12, 3));
    const ReferenceChoice r = select_reference({&a, &b});
    CHECK(r.scores[0] == r.scores[1]);
    CHECK(r.scores[0] == r.similarity.values(0, 1));
    CHECK(r.reference_index == 0);
    CHECK(r.reference_signer == "a");
  }
  SUBCASE("the identical pair beats the orthogonal outlier") {
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(6, 2), q = Eigen::MatrixXd::Zero(6, 2);
    p.col(0).setOnes();
    q.col(1).setOnes();
    const auto a = seq_of("a", q), b = seq_of("b", p), c = seq_of("c", p);
    const ReferenceChoice r = select_reference({&a, &b, &c});
    CHECK(r.reference_signer != "a");
    CHECK(r.scores[1] == doctest::Approx(0.5));
  }
  SUBCASE("errors and json") {
    const auto a = seq_of("a", Eigen::MatrixXd::Random(10, 3));
    CHECK_THROWS_AS(select_reference({&a}), InvalidArgument);
    const auto z = seq_of("z", Eigen::MatrixXd::Zero(10, 3));
    CHECK_THROWS_AS(select_reference({&a, &z}), DegenerateInput);
    const auto b = seq_of("b", Eigen::MatrixXd::Random(10, 3));
    const auto j = to_json(select_reference({&a, &b}));
    CHECK(j.at("sentence") == "s00");
    CHECK(j.at("scores").size() == 2);
  }
}

TEST_CASE("a planted central production is selected and is the DTW medoid") {
  // Natives are one base trajectory plus independent noise, one of them much
  // quieter than the rest, each resampled to its own tempo.
  int hits = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    std::mt19937_64 rng(seed);
    const Eigen::MatrixXd base = oracle::random_walk(rng, 100, 10).array() + 1.0;
    const std::size_t central = seed % 6;
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_int_distribution<int> len(85, 115);
    std::vector<LatentSequence> seqs;
    for (std::size_t k = 0; k < 6; ++k) {
      Eigen::MatrixXd mu = base;
      const double scale = k == central ? 0.02 : 0.3;
      for (Eigen::Index i = 0; i < mu.size(); ++i) mu.data()[i] += scale * noise(rng);
      seqs.push_back(seq_of(native_name(k), resample_latents(mu, static_cast<std::size_t>(len(rng)))));
    }
    std::vector<const LatentSequence*> ptrs;
    for (const auto& s : seqs) ptrs.push_back(&s);
    const ReferenceChoice choice = select_reference(ptrs);
    std::vector<double> mean_dist(seqs.size(), 0.0);
    for (std::size_t i = 0; i < seqs.size(); ++i)
      for (std::size_t j = 0; j < seqs.size(); ++j)
        if (i != j) mean_dist[i] += dtw_full(seqs[i].mu, seqs[j].mu).cost;
    const auto medoid =
        static_cast<std::size_t>(std::min_element(mean_dist.begin(), mean_dist.end()) - mean_dist.begin());
    if (medoid == choice.reference_index && medoid == central) ++hits;
  }
  CHECK(hits >= 8);
}

TEST_CASE("selection invariances") {
  std::mt19937_64 rng(21);
  std::vector<LatentSequence> seqs;
  for (std::size_t k = 0; k < 5; ++k)
    seqs.push_back(seq_of(native_name(k), oracle::random_walk(rng, 20 + static_cast<Eigen::Index>(k) * 3, 4)));
  std::vector<const LatentSequence*> ptrs;
  for (const auto& s : seqs) ptrs.push_back(&s);
  const ReferenceChoice base = select_reference(ptrs);

  std::vector<const LatentSequence*> rev(ptrs.rbegin(), ptrs.rend());
  const ReferenceChoice flipped = select_reference(rev);
  CHECK(flipped.reference_signer == base.reference_signer);
  for (std::size_t k = 0; k < 5; ++k) CHECK(flipped.scores[4 - k] == doctest::Approx(base.scores[k]).epsilon(1e-12));

  std::vector<LatentSequence> scaled = seqs;
  for (auto& s : scaled) s.mu *= 3.5;
  std::vector<const LatentSequence*> sp;
  for (const auto& s : scaled) sp.push_back(&s);
  const ReferenceChoice big = select_reference(sp);
  CHECK((big.similarity.values - base.similarity.values).cwiseAbs().maxCoeff() < 1e-12);
}
