// End-to-end acceptance run over seeded synthetic corpora. Prints one
// PASS/FAIL line per criterion and exits non-zero if any fails.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gradcheck.hpp"
#include "menv/alignment.hpp"
#include "menv/evaluation.hpp"
#include "menv/pipeline.hpp"
#include "menv/text_io.hpp"
#include "oracles.hpp"

using namespace menv;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

template <class F>
double timed(F&& f) {
  const auto start = Clock::now();
  f();
  return seconds_since(start);
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

struct Line {
  int id;
  bool pass;
  std::string detail;
};

void print(const Line& l) {
  std::cout << "criterion " << l.id << ": " << (l.pass ? "PASS" : "FAIL") << " (" << l.detail << ")" << std::endl;
}

// ---- in-process criteria ----

Line gradients() {
  double worst_vae = 0.0, worst_gp = 0.0;
  std::size_t checked = 0;
  const double secs = timed([&] {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const auto r = gradcheck::vae_gradients(seed);
      worst_vae = std::max(worst_vae, r.max_rel_err);
      checked += r.checked;
    }
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const auto r = gradcheck::gp_gradients(seed, seed % 2 == 0);
      worst_gp = std::max(worst_gp, r.max_rel_err);
      checked += r.checked;
    }
  });
  return {1, worst_vae < 1e-4 && worst_gp < 1e-4 && secs < 30.0,
          "max rel err vae " + fmt(worst_vae, 3) + ", gp " + fmt(worst_gp, 3) + " over " + std::to_string(checked) +
              " partials, " + fmt(secs, 3) + " s"};
}

Line dtw_oracle() {
  std::mt19937_64 rng(20240917);
  std::uniform_int_distribution<int> len(2, 50);
  int exact_ok = 0;
  double worst = 1.0;
  const double secs = timed([&] {
    for (int trial = 0; trial < 100; ++trial) {
      const Eigen::MatrixXd a = oracle::random_walk(rng, len(rng), 10), b = oracle::random_walk(rng, len(rng), 10);
      const double truth = oracle::dtw_cost(a, b);
      const auto longest = static_cast<std::size_t>(std::max(a.rows(), b.rows()));
      if (dtw(a, b, longest).cost == truth) ++exact_ok;
      worst = std::max(worst, dtw(a, b, 20).cost / truth);
    }
  });
  return {2, exact_ok == 100 && worst <= 1.05 && secs < 30.0,
          std::to_string(exact_ok) + "/100 exact at radius >= length, worst ratio at radius 20 " + fmt(worst, 6) +
              ", " + fmt(secs, 3) + " s"};
}

Line statistics() {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> n;
  double beta_gap = 0.0, idem_gap = 0.0;
  bool monotone = true;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t size = 5 + static_cast<std::size_t>(trial % 30);
    std::vector<double> x(size), y(size);
    for (std::size_t i = 0; i < size; ++i) {
      x[i] = 3.0 * n(rng) + 1.0;
      y[i] = 0.4 * x[i] + n(rng);
    }
    const auto zx = zscore(x), zy = zscore(y);
    beta_gap = std::max(beta_gap, std::abs(standardized_beta(zx, zy) - pearson(zx, zy)));
    const auto zz = zscore(zx);
    for (std::size_t i = 0; i < size; ++i) idem_gap = std::max(idem_gap, std::abs(zz[i] - zx[i]));
    std::vector<double> up(x), down(x);
    std::sort(up.begin(), up.end());
    std::sort(down.begin(), down.end(), std::greater<>());
    std::vector<double> cubes(up);
    for (auto& v : cubes) v = v * v * v;
    monotone = monotone && spearman(up, cubes) == 1.0 && spearman(up, down) == -1.0;
  }
  return {7, beta_gap < 1e-10 && idem_gap < 1e-12 && monotone,
          "beta vs pearson gap " + fmt(beta_gap, 3) + ", z-score idempotence gap " + fmt(idem_gap, 3) +
              ", spearman +-1 " + (monotone ? "exact" : "broken")};
}

// ---- pipeline criteria ----

struct SeedResult {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double t_total = 0.0, t_train = 0.0;
  double loss_ratio = 0.0, l1_mean = 0.0, l1_max = 0.0;
  double heldout_ood = 0.0;
  double min_srcc_pd = 0.0, min_srcc_ood = 0.0;
  std::map<double, std::vector<double>> pd_by_delta;
  std::size_t localized = 0, localizable = 0;
  std::string report_bytes;
};

RunConfig seed_config(const fs::path& root, std::uint64_t seed, std::size_t epochs) {
  return resolve_config(std::nullopt, {"seed=" + std::to_string(seed),
                                       "paths.output=" + json((root / ("seed" + std::to_string(seed))).string()).dump(),
                                       "jobs=1", "vae.epochs=" + std::to_string(epochs)});
}

double timed_pipeline(const RunConfig& c, double* train_secs) {
  double total = 0.0;
  total += timed([&] { cmd_synth(c); });
  const double t = timed([&] { cmd_train_vae(c); });
  if (train_secs) *train_secs = t;
  total += t;
  total += timed([&] { cmd_encode(c); });
  total += timed([&] { cmd_fit_envelope(c); });
  total += timed([&] { cmd_score(c); });
  total += timed([&] { cmd_evaluate(c); });
  return total;
}

void reconstruction(const RunConfig& c, SeedResult& r) {
  const CorpusManifest m = load_manifest(c.manifest_path());
  const Eigen::MatrixXd pool = native_pose_pool(m);
  const VaeModel model = load_model(c.vae_path());
  Eigen::MatrixXd mu, lv;
  model.encode_batch(pool, mu, lv);
  const Eigen::VectorXd per_coord = (model.decode_batch(mu) - pool).cwiseAbs().rowwise().mean();
  r.l1_mean = per_coord.mean();
  r.l1_max = per_coord.maxCoeff();
  const json train = json::parse(read_text_file(c.output_dir / "vae_train.json"));
  r.loss_ratio = train.at("final").at("total").get<double>() / train.at("initial").at("total").get<double>();
}

// Spearman with deltas, per sentence, amplitude learners only.
void discrimination(const RunConfig& c, const std::vector<LearnerTruth>& truth, SeedResult& r) {
  std::map<std::string, std::vector<std::array<double, 3>>> rows;  // delta, pd, ood
  std::vector<double> heldout;
  r.min_srcc_pd = r.min_srcc_ood = 1.0;
  for (const auto& t : truth) {
    const json s = json::parse(read_text_file(c.score_path(t.sentence, t.signer)));
    if (t.deviation.mode != DeviationMode::kAmplitudeError) {
      // Localization: the window maps onto the reference timeline proportionally.
      ++r.localizable;
      const double len = s.at("length").get<double>();
      const double lo = std::floor(t.deviation.start * len), hi = std::ceil(t.deviation.end * len) - 1;
      for (const auto& a : s.at("anomalies"))
        if (a.at("t_start").get<double>() <= hi && a.at("t_end").get<double>() >= lo) {
          ++r.localized;
          break;
        }
      continue;
    }
    const double pd = s.at("pd_measure").get<double>(), ood = s.at("ood_count").get<double>();
    rows[t.sentence].push_back({t.deviation.delta, pd, ood});
    r.pd_by_delta[t.deviation.delta].push_back(pd);
    if (t.deviation.delta == 0.0) heldout.push_back(s.at("ood_fraction").get<double>());
  }
  for (const auto& [sentence, list] : rows) {
    std::vector<double> delta, neg_delta, pd, ood;
    for (const auto& x : list) {
      delta.push_back(x[0]);
      neg_delta.push_back(-x[0]);
      pd.push_back(x[1]);
      ood.push_back(x[2]);
    }
    r.min_srcc_pd = std::min(r.min_srcc_pd, spearman(pd, neg_delta));
    r.min_srcc_ood = std::min(r.min_srcc_ood, spearman(ood, delta));
  }
  r.heldout_ood = heldout.empty() ? NAN : std::accumulate(heldout.begin(), heldout.end(), 0.0) / heldout.size();
}

SeedResult run_seed(const fs::path& root, std::uint64_t seed, std::size_t epochs) {
  SeedResult r;
  r.seed = seed;
  try {
    const RunConfig c = seed_config(root, seed, epochs);
    fs::remove_all(c.output_dir);
    r.t_total = timed_pipeline(c, &r.t_train);
    r.report_bytes = read_text_file(c.output_dir / "report.json");
    reconstruction(c, r);
    discrimination(c, load_truth(c.truth_path()), r);
    r.ok = true;
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  std::cout << "seed " << seed << ": "
            << (r.ok ? "total " + fmt(r.t_total) + " s, train " + fmt(r.t_train) + " s, loss ratio " +
                           fmt(r.loss_ratio) + ", L1 mean " + fmt(r.l1_mean) + " max " + fmt(r.l1_max) +
                           ", held-out OOD " + fmt(r.heldout_ood) + ", min SRCC pd " + fmt(r.min_srcc_pd) +
                           " ood " + fmt(r.min_srcc_ood) + ", localized " + std::to_string(r.localized) + "/" +
                           std::to_string(r.localizable)
                     : "error: " + r.error)
            << std::endl;
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance run"};
  std::size_t seeds = 10, epochs = 2000;
  fs::path work = fs::temp_directory_path() / "menv_acceptance";
  bool keep = false;
  app.add_option("--seeds", seeds)->check(CLI::PositiveNumber);
  app.add_option("--epochs", epochs);
  app.add_option("--work", work);
  app.add_flag("--keep", keep, "keep the run directories");
  CLI11_PARSE(app, argc, argv);
  const std::size_t need = seeds - seeds / 5;  // 8 of 10

  std::vector<Line> lines;
  lines.push_back(gradients());
  print(lines.back());
  lines.push_back(dtw_oracle());
  print(lines.back());

  std::vector<SeedResult> results;
  for (std::uint64_t s = 1; s <= seeds; ++s) results.push_back(run_seed(work, s, epochs));
  auto count_if = [&](auto pred) {
    return static_cast<std::size_t>(std::count_if(results.begin(), results.end(), pred));
  };

  {
    double worst_ratio = 0.0, worst_l1 = 0.0, worst_max = 0.0, worst_t = 0.0;
    for (const auto& r : results) {
      worst_ratio = std::max(worst_ratio, r.loss_ratio);
      worst_l1 = std::max(worst_l1, r.l1_mean);
      worst_max = std::max(worst_max, r.l1_max);
      worst_t = std::max(worst_t, r.t_train);
    }
    const std::size_t ok = count_if([](const SeedResult& r) {
      return r.ok && r.loss_ratio <= 0.1 && r.l1_mean < 0.05 && r.t_train < 300.0;
    });
    lines.push_back({3, ok == results.size(),
                     std::to_string(ok) + "/" + std::to_string(results.size()) +
                         " seeds; worst loss ratio " + fmt(worst_ratio) + ", worst mean L1 " + fmt(worst_l1) +
                         " (worst single-coordinate mean " + fmt(worst_max) + "), slowest training " +
                         fmt(worst_t) + " s"});
    print(lines.back());
  }
  {
    std::string vals;
    for (const auto& r : results) vals += (vals.empty() ? "" : " ") + fmt(r.heldout_ood, 3);
    const std::size_t ok =
        count_if([](const SeedResult& r) { return r.ok && r.heldout_ood >= 0.02 && r.heldout_ood <= 0.10; });
    lines.push_back({4, ok >= need,
                     std::to_string(ok) + "/" + std::to_string(results.size()) +
                         " seeds with held-out outside fraction in [0.02, 0.10]: " + vals});
    print(lines.back());
  }
  {
    std::map<double, double> seed_avg;
    for (const auto& r : results)
      for (const auto& [delta, v] : r.pd_by_delta)
        seed_avg[delta] += std::accumulate(v.begin(), v.end(), 0.0) / v.size() / results.size();
    bool decreasing = seed_avg.size() >= 2;
    std::string means;
    double prev = INFINITY;
    for (const auto& [delta, m] : seed_avg) {
      decreasing = decreasing && m < prev;
      prev = m;
      means += (means.empty() ? "" : ", ") + fmt(delta, 2) + ": " + fmt(m);
    }
    const std::size_t ok =
        count_if([](const SeedResult& r) { return r.ok && r.min_srcc_pd >= 0.8 && r.min_srcc_ood >= 0.8; });
    lines.push_back({5, decreasing && ok >= need,
                     "mean PD by delta {" + means + "} " + (decreasing ? "strictly decreasing" : "NOT decreasing") +
                         "; " + std::to_string(ok) + "/" + std::to_string(results.size()) +
                         " seeds with every sentence SRCC >= 0.8"});
    print(lines.back());
  }
  {
    const std::size_t ok =
        count_if([](const SeedResult& r) { return r.ok && r.localizable > 0 && r.localized == r.localizable; });
    std::size_t hit = 0, total = 0;
    for (const auto& r : results) {
      hit += r.localized;
      total += r.localizable;
    }
    lines.push_back({6, ok >= need,
                     std::to_string(ok) + "/" + std::to_string(results.size()) +
                         " seeds with every freeze/wrong-channel window located (" + std::to_string(hit) + "/" +
                         std::to_string(total) + " learners overall)"});
    print(lines.back());
  }
  lines.push_back(statistics());
  print(lines.back());
  {
    bool same = false;
    std::string detail;
    if (!results.empty() && results.front().ok) {
      SeedResult again = run_seed(work, 1, epochs);
      same = again.ok && again.report_bytes == results.front().report_bytes;
      detail = "seed 1 rerun report.json " + std::string(same ? "byte-identical" : "differs") + " (" +
               std::to_string(results.front().report_bytes.size()) + " bytes)";
    } else {
      detail = "seed 1 did not complete";
    }
    lines.push_back({8, same, detail});
    print(lines.back());
  }
  {
    double worst = 0.0;
    for (const auto& r : results) worst = std::max(worst, r.ok ? r.t_total : INFINITY);
    lines.push_back({9, worst < 600.0, "slowest seed " + fmt(worst) + " s with jobs=1"});
    print(lines.back());
  }

  std::sort(lines.begin(), lines.end(), [](const Line& a, const Line& b) { return a.id < b.id; });
  std::cout << "\nsummary\n";
  bool all = true;
  for (const auto& l : lines) {
    print(l);
    all = all && l.pass;
  }
  if (!keep) fs::remove_all(work);
  return all ? 0 : 1;
}
