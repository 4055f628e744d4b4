#include "sharpiv/finite_sample.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <map>
#include <utility>
#include <vector>

#include "sharpiv/errors.hpp"
#include "sharpiv/parallel.hpp"
#include "sharpiv/rng.hpp"

namespace sharpiv {

namespace {

constexpr std::uint64_t kSaltWidth = 0x68746469772d7366ull;

/* Bernoulli(1/2) sample sums as popcounts of hashed words.  Draw b of sample
 * s uses lanes lane0 + t for word t, so the two samples of a pair and all
 * draws are independent streams. */
std::int64_t bernoulli_sum(const rng::Stream& s, std::uint64_t ctr,
                           std::uint64_t lane0, std::int64_t n) {
  std::int64_t k = 0;
  std::int64_t left = n;
  std::uint64_t lane = lane0;
  while (left >= 64) {
    k += std::popcount(s.raw(ctr, lane++));
    left -= 64;
  }
  if (left > 0) {
    const std::uint64_t mask = ~0ull >> (64 - left);
    k += std::popcount(s.raw(ctr, lane) & mask);
  }
  return k;
}

void check_width_args(std::int64_t n_j, std::int64_t n_jp, double alpha_width,
                      std::int64_t b_sim) {
  if (n_j < 1 || n_jp < 1)
    fail(ErrorKind::Config, "width simulation needs at least one case per judge");
  if (!(alpha_width > 0.0 && alpha_width < 0.5))
    fail(ErrorKind::Config, "width tail level must lie in (0, 0.5), got " +
                                std::to_string(alpha_width));
  if (b_sim < 1)
    fail(ErrorKind::Config, "width simulation needs at least one draw");
}

/* Largest integer count t with t/b_sim <= alpha_width; the exceedance rule
 * "(1/B) sum 1{Delta > c} <= level" then reads "count <= t". */
std::int64_t tail_budget(double alpha_width, std::int64_t b_sim) {
  auto ok = [&](std::int64_t t) {
    return static_cast<double>(t) / static_cast<double>(b_sim) <= alpha_width;
  };
  std::int64_t t = static_cast<std::int64_t>(alpha_width *
                                             static_cast<double>(b_sim));
  while (t > 0 && !ok(t)) --t;
  while (t + 1 <= b_sim && ok(t + 1)) ++t;
  return t;
}

}  // namespace

double fs_critical_width(std::int64_t n_star, double alpha_width,
                         std::int64_t b_sim, std::uint64_t seed) {
  check_width_args(n_star, n_star, alpha_width, b_sim);
  const std::int64_t words = (n_star + 63) / 64;
  const rng::Stream s{seed};

  /* Both samples share n_star, so Delta_b lives on the grid j/n_star with
   * j = k1 - k2 an integer; count draws per integer. */
  std::vector<std::int64_t> hist(static_cast<std::size_t>(2 * n_star + 1), 0);
  for (std::int64_t b = 0; b < b_sim; ++b) {
    const std::int64_t k1 =
        bernoulli_sum(s, static_cast<std::uint64_t>(b), 1, n_star);
    const std::int64_t k2 = bernoulli_sum(s, static_cast<std::uint64_t>(b),
                                          1 + static_cast<std::uint64_t>(words),
                                          n_star);
    ++hist[static_cast<std::size_t>(k1 - k2 + n_star)];
  }

  const std::int64_t budget = tail_budget(alpha_width, b_sim);
  /* above[j] = #draws with k1 - k2 > j; walk the grid from below and stop at
   * the first point whose exceedance count fits the budget. */
  std::vector<std::int64_t> above(hist.size() + 1, 0);
  for (std::int64_t j = n_star; j >= -n_star; --j)
    above[static_cast<std::size_t>(j + n_star)] =
        above[static_cast<std::size_t>(j + n_star + 1)] +
        hist[static_cast<std::size_t>(j + n_star)];
  for (std::int64_t j = -n_star; j <= n_star; ++j) {
    if (above[static_cast<std::size_t>(j + n_star + 1)] <= budget)
      return static_cast<double>(j) / static_cast<double>(n_star);
  }
  fail(ErrorKind::Internal, "width grid scan found no admissible point");
}

double fs_critical_width(std::int64_t n_j, std::int64_t n_jp,
                         double alpha_width, std::int64_t b_sim,
                         std::uint64_t seed) {
  if (n_j == n_jp) return fs_critical_width(n_j, alpha_width, b_sim, seed);
  check_width_args(n_j, n_jp, alpha_width, b_sim);
  const std::int64_t words1 = (n_j + 63) / 64;
  const rng::Stream s{seed};

  /* Every simulated difference is itself a grid (support) point, and the
   * exceedance count #{Delta_b > c} only drops below the budget once c
   * reaches the (budget+1)-th largest draw, so the smallest admissible grid
   * point is exactly that order statistic. */
  std::vector<double> draws(static_cast<std::size_t>(b_sim));
  for (std::int64_t b = 0; b < b_sim; ++b) {
    const std::int64_t k1 =
        bernoulli_sum(s, static_cast<std::uint64_t>(b), 1, n_j);
    const std::int64_t k2 = bernoulli_sum(
        s, static_cast<std::uint64_t>(b),
        1 + static_cast<std::uint64_t>(words1), n_jp);
    draws[static_cast<std::size_t>(b)] =
        static_cast<double>(k1) / static_cast<double>(n_j) -
        static_cast<double>(k2) / static_cast<double>(n_jp);
  }
  const std::int64_t budget = std::min(tail_budget(alpha_width, b_sim),
                                       b_sim - 1);
  auto nth = draws.begin() + static_cast<std::ptrdiff_t>(b_sim - 1 - budget);
  std::nth_element(draws.begin(), nth, draws.end());
  return *nth;
}

PairDecision fs_pair_test(const JudgeSummary& sj, const JudgeSummary& sk,
                          double c_p, double c_q1, double c_q0) {
  PairDecision d;
  d.delta_p = sj.p_hat - sk.p_hat;
  d.delta_q1 = sj.q1_hat - sk.q1_hat;
  d.delta_q0 = sj.q0_hat - sk.q0_hat;
  d.c_hat = c_p;
  d.cs_p_lo = d.delta_p - c_p;
  d.cs_p_hi = d.delta_p + c_p;
  d.cs_q1_lo = d.delta_q1 - c_q1;
  d.cs_q1_hi = d.delta_q1 + c_q1;
  d.cs_q0_lo = d.delta_q0 - c_q0;
  d.cs_q0_hi = d.delta_q0 + c_q0;
  if (d.cs_p_hi < 0.0 && d.cs_q1_lo > 0.0) d.events.push_back("p-down/q1-up");
  if (d.cs_p_hi < 0.0 && d.cs_q0_lo > 0.0) d.events.push_back("p-down/q0-up");
  if (d.cs_p_lo > 0.0 && d.cs_q1_hi < 0.0) d.events.push_back("p-up/q1-down");
  if (d.cs_p_lo > 0.0 && d.cs_q0_hi < 0.0) d.events.push_back("p-up/q0-down");
  d.rejected = !d.events.empty();
  return d;
}

FiniteResult run_finite_sample_test(const Dataset& ds, const FiniteConfig& cfg,
                                    WidthCache* cache) {
  validate(ds);
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0))
    fail(ErrorKind::Config,
         "alpha must lie in (0,1), got " + std::to_string(cfg.alpha));
  if (cfg.b_sim < 1)
    fail(ErrorKind::Config, "width simulation needs at least one draw");
  if (!is_binary01(ds.y))
    fail(ErrorKind::Validation,
         "outcome is not binary; the exact pairwise test only covers 0/1 "
         "outcomes, use the asymptotic sharp test instead");
  if (ds.kz() != 1)
    fail(ErrorKind::Config,
         "the pairwise test expects exactly one instrument column whose "
         "values index the judges, got " + std::to_string(ds.kz()));
  if (ds.kx() != 0)
    fail(ErrorKind::Config,
         "the pairwise test does not use covariate columns; drop them from "
         "the ingest schema");

  const std::size_t n = ds.n();
  std::map<double, int> judge_of;
  for (std::size_t i = 0; i < n; ++i) judge_of.emplace(ds.z[0][i], 0);
  const int J = static_cast<int>(judge_of.size());
  if (J < 2)
    fail(ErrorKind::Validation,
         "need at least two judges, found " + std::to_string(J));
  {
    int idx = 0;
    for (auto& [value, slot] : judge_of) slot = idx++;
  }

  FiniteResult res;
  res.alpha = cfg.alpha;
  res.alpha_pair = 2.0 * cfg.alpha / (static_cast<double>(J) * (J - 1));
  res.alpha_width = res.alpha_pair / 4.0;
  res.n = n;
  res.n_judges = J;
  res.b_sim = cfg.b_sim;
  res.seed = cfg.seed;

  res.judges.resize(static_cast<std::size_t>(J));
  for (auto& [value, slot] : judge_of)
    res.judges[static_cast<std::size_t>(slot)].judge = value;
  for (std::size_t i = 0; i < n; ++i) {
    auto& js = res.judges[static_cast<std::size_t>(judge_of.at(ds.z[0][i]))];
    ++js.n;
    const double di = static_cast<double>(ds.d[i]);
    js.p_hat += di;
    js.q1_hat += ds.y[i] * di;
    js.q0_hat -= ds.y[i] * (1.0 - di);
  }
  for (auto& js : res.judges) {
    js.p_hat /= static_cast<double>(js.n);
    js.q1_hat /= static_cast<double>(js.n);
    js.q0_hat /= static_cast<double>(js.n);
  }

  /* Simulate each distinct unordered count pair once.  The stream key mixes
   * only the seed and the ordered counts, so judge relabeling and cache
   * sharing across replications cannot change any width. */
  std::map<std::pair<std::int64_t, std::int64_t>, double> widths;
  std::vector<std::pair<std::int64_t, std::int64_t>> todo;
  for (int j = 0; j < J; ++j)
    for (int k = j + 1; k < J; ++k) {
      const std::pair<std::int64_t, std::int64_t> key =
          std::minmax(res.judges[static_cast<std::size_t>(j)].n,
                      res.judges[static_cast<std::size_t>(k)].n);
      if (widths.count(key) != 0) continue;
      bool found = false;
      double w = 0.0;
      if (cache != nullptr) {
        std::lock_guard<std::mutex> lock(cache->mu);
        auto hit = cache->widths.find(key);
        if (hit != cache->widths.end()) {
          w = hit->second;
          found = true;
        }
      }
      if (found) {
        widths.emplace(key, w);
      } else {
        widths.emplace(key, 0.0);
        todo.push_back(key);
      }
    }
  std::vector<double> computed(todo.size(), 0.0);
  parallel_for(todo.size(), cfg.threads, [&](std::size_t t) {
    const auto [na, nb] = todo[t];
    const std::uint64_t wseed =
        rng::key3(cfg.seed, kSaltWidth,
                  rng::key2(static_cast<std::uint64_t>(na),
                            static_cast<std::uint64_t>(nb)));
    computed[t] = fs_critical_width(na, nb, res.alpha_width, cfg.b_sim, wseed);
  });
  for (std::size_t t = 0; t < todo.size(); ++t) widths[todo[t]] = computed[t];
  if (cache != nullptr && !todo.empty()) {
    std::lock_guard<std::mutex> lock(cache->mu);
    for (std::size_t t = 0; t < todo.size(); ++t)
      cache->widths.emplace(todo[t], computed[t]);
  }

  res.pairs.reserve(static_cast<std::size_t>(J) * (J - 1) / 2);
  for (int j = 0; j < J; ++j)
    for (int k = j + 1; k < J; ++k) {
      const std::pair<std::int64_t, std::int64_t> key =
          std::minmax(res.judges[static_cast<std::size_t>(j)].n,
                      res.judges[static_cast<std::size_t>(k)].n);
      const double c = widths.at(key);
      PairDecision d = fs_pair_test(res.judges[static_cast<std::size_t>(j)],
                                    res.judges[static_cast<std::size_t>(k)], c,
                                    c, c);
      d.j = j;
      d.jp = k;
      res.reject = res.reject || d.rejected;
      res.pairs.push_back(std::move(d));
    }
  return res;
}

}  // namespace sharpiv
