#include "menv/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "menv/error.hpp"
#include "menv/parallel.hpp"

namespace menv {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Allowed columns [lo, hi] for each row of the cost matrix.
struct Window {
  std::vector<std::size_t> lo;
  std::vector<std::size_t> hi;
};

Window full_window(std::size_t n, std::size_t m) {
  return Window{std::vector<std::size_t>(n, 0), std::vector<std::size_t>(n, m - 1)};
}

DtwResult windowed_dtw(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Window& w) {
  const auto n = static_cast<std::size_t>(a.rows());
  const auto m = static_cast<std::size_t>(b.rows());
  std::vector<std::vector<double>> acc(n);
  auto at = [&](std::size_t i, std::size_t j) -> double {
    if (j < w.lo[i] || j > w.hi[i]) return kInf;
    return acc[i][j - w.lo[i]];
  };
  for (std::size_t i = 0; i < n; ++i) {
    acc[i].assign(w.hi[i] - w.lo[i] + 1, kInf);
    for (std::size_t j = w.lo[i]; j <= w.hi[i]; ++j) {
      const double d = (a.row(static_cast<Eigen::Index>(i)) - b.row(static_cast<Eigen::Index>(j))).norm();
      double best;
      if (i == 0 && j == 0) {
        best = 0.0;
      } else {
        best = kInf;
        if (i > 0 && j > 0) best = std::min(best, at(i - 1, j - 1));
        if (i > 0) best = std::min(best, at(i - 1, j));
        if (j > 0) best = std::min(best, at(i, j - 1));
      }
      acc[i][j - w.lo[i]] = best + d;
    }
  }
  DtwResult r;
  r.cost = at(n - 1, m - 1);
  if (!std::isfinite(r.cost)) throw NumericError("DTW window does not connect the corners");
  std::size_t i = n - 1, j = m - 1;
  r.path.steps.emplace_back(i, j);
  while (i > 0 || j > 0) {
    if (i == 0) {
      --j;
    } else if (j == 0) {
      --i;
    } else {
      const double diag = at(i - 1, j - 1);
      const double up = at(i - 1, j);
      const double left = at(i, j - 1);
      if (diag <= up && diag <= left) {
        --i;
        --j;
      } else if (up <= left) {
        --i;
      } else {
        --j;
      }
    }
    r.path.steps.emplace_back(i, j);
  }
  std::reverse(r.path.steps.begin(), r.path.steps.end());
  return r;
}

Eigen::MatrixXd coarsen(const Eigen::MatrixXd& x) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd out((n + 1) / 2, x.cols());
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    if (2 * i + 1 < n)
      out.row(i) = 0.5 * (x.row(2 * i) + x.row(2 * i + 1));
    else
      out.row(i) = x.row(2 * i);
  }
  return out;
}

Window expand_window(const WarpPath& low, std::size_t n, std::size_t m, std::size_t radius) {
  Window w{std::vector<std::size_t>(n, m), std::vector<std::size_t>(n, 0)};
  const auto r = static_cast<long>(radius);
  const auto nl = static_cast<long>((n + 1) / 2);
  for (const auto& [li, lj] : low.steps) {
    const long col_lo = std::max(0L, 2 * (static_cast<long>(lj) - r));
    const long col_hi = std::min(static_cast<long>(m) - 1, 2 * (static_cast<long>(lj) + r) + 1);
    for (long a = std::max(0L, static_cast<long>(li) - r); a <= std::min(nl - 1, static_cast<long>(li) + r); ++a) {
      for (long row = 2 * a; row <= 2 * a + 1 && row < static_cast<long>(n); ++row) {
        auto& lo = w.lo[static_cast<std::size_t>(row)];
        auto& hi = w.hi[static_cast<std::size_t>(row)];
        lo = std::min(lo, static_cast<std::size_t>(col_lo));
        hi = std::max(hi, static_cast<std::size_t>(col_hi));
      }
    }
  }
  return w;
}

DtwResult multiscale(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, std::size_t radius) {
  const auto n = static_cast<std::size_t>(a.rows());
  const auto m = static_cast<std::size_t>(b.rows());
  if (n <= 2 * radius || m <= 2 * radius || n < 4 || m < 4) return windowed_dtw(a, b, full_window(n, m));
  DtwResult low = multiscale(coarsen(a), coarsen(b), radius);
  return windowed_dtw(a, b, expand_window(low.path, n, m, radius));
}

void check_inputs(const Eigen::MatrixXd& ref, const Eigen::MatrixXd& test) {
  if (ref.rows() == 0 || test.rows() == 0) throw InvalidArgument("DTW needs non-empty sequences");
  if (ref.cols() != test.cols()) throw InvalidArgument("DTW sequences differ in width");
}

}  // namespace

void check_warp_path(const WarpPath& path, std::size_t ref_len, std::size_t test_len) {
  const auto& s = path.steps;
  if (s.empty()) throw InvalidArgument("warp path is empty");
  if (s.front() != std::pair<std::size_t, std::size_t>{0, 0}) throw InvalidArgument("warp path must start at (0, 0)");
  if (s.back() != std::pair<std::size_t, std::size_t>{ref_len - 1, test_len - 1})
    throw InvalidArgument("warp path must end at (T*-1, T_test-1)");
  for (std::size_t i = 1; i < s.size(); ++i) {
    const auto di = s[i].first - s[i - 1].first;
    const auto dj = s[i].second - s[i - 1].second;
    bool ok = s[i].first >= s[i - 1].first && s[i].second >= s[i - 1].second && di <= 1 && dj <= 1 && (di + dj) > 0;
    if (!ok) throw InvalidArgument("warp path has an invalid step at position " + std::to_string(i));
  }
}

DtwResult dtw_full(const Eigen::MatrixXd& ref, const Eigen::MatrixXd& test) {
  check_inputs(ref, test);
  return windowed_dtw(ref, test, full_window(static_cast<std::size_t>(ref.rows()), static_cast<std::size_t>(test.rows())));
}

DtwResult dtw(const Eigen::MatrixXd& ref, const Eigen::MatrixXd& test, std::size_t radius) {
  check_inputs(ref, test);
  return multiscale(ref, test, radius);
}

AlignedLatentSequence apply_warp(const WarpPath& path, const LatentSequence& test, std::size_t ref_len) {
  check_warp_path(path, ref_len, test.length());
  AlignedLatentSequence out;
  out.sentence_id = test.sentence_id;
  out.signer_id = test.signer_id;
  const auto rows = static_cast<Eigen::Index>(ref_len);
  out.mu = Eigen::MatrixXd::Zero(rows, test.mu.cols());
  out.logvar = Eigen::MatrixXd::Zero(rows, test.logvar.cols());
  std::vector<double> count(ref_len, 0.0);
  for (const auto& [t_ref, t_test] : path.steps) {
    out.mu.row(static_cast<Eigen::Index>(t_ref)) += test.mu.row(static_cast<Eigen::Index>(t_test));
    out.logvar.row(static_cast<Eigen::Index>(t_ref)) += test.logvar.row(static_cast<Eigen::Index>(t_test));
    count[t_ref] += 1.0;
  }
  for (Eigen::Index t = 0; t < rows; ++t) {
    out.mu.row(t) /= count[static_cast<std::size_t>(t)];
    out.logvar.row(t) /= count[static_cast<std::size_t>(t)];
  }
  return out;
}

AlignedLatentSequence align_to_reference(const LatentSequence& reference, const LatentSequence& test,
                                         std::size_t radius) {
  DtwResult r = dtw(reference.mu, test.mu, radius);
  AlignedLatentSequence out = apply_warp(r.path, test, reference.length());
  out.reference_signer = reference.signer_id;
  return out;
}

AlignedCorpus align_corpus(const LatentCorpus& latents, const std::vector<ReferenceChoice>& references,
                           std::size_t radius, std::size_t jobs) {
  std::map<std::string, const LatentSequence*> ref_of;
  for (const auto& choice : references) {
    auto it = latents.find({choice.sentence_id, choice.reference_signer});
    if (it == latents.end())
      throw InvalidArgument("reference (" + choice.sentence_id + ", " + choice.reference_signer + ") has no latents");
    ref_of[choice.sentence_id] = &it->second;
  }
  std::vector<const LatentSequence*> work;
  for (const auto& [key, seq] : latents)
    if (ref_of.count(key.first)) work.push_back(&seq);

  std::vector<AlignedLatentSequence> out(work.size());
  parallel_for(work.size(), jobs, [&](std::size_t i) {
    const LatentSequence& test = *work[i];
    const LatentSequence& ref = *ref_of.at(test.sentence_id);
    if (test.signer_id == ref.signer_id) {
      out[i] = AlignedLatentSequence{test.sentence_id, test.signer_id, ref.signer_id, test.mu, test.logvar};
    } else {
      out[i] = align_to_reference(ref, test, radius);
    }
  });
  AlignedCorpus corpus;
  for (auto& a : out) corpus.emplace(EntryKey{a.sentence_id, a.signer_id}, std::move(a));
  return corpus;
}

void save_aligned(const AlignedLatentSequence& seq, const std::filesystem::path& path) {
  LatentSequence plain{seq.sentence_id, seq.signer_id, seq.mu, seq.logvar};
  save_latents(plain, path, "reference=" + seq.reference_signer);
}

}  // namespace menv
