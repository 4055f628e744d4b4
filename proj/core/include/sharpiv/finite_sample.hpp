#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "sharpiv/dataset.hpp"

/* Exact small-sample test for binary outcomes.
 *
 * With few cases per judge the treatment share of a judge cannot be estimated
 * consistently, so the asymptotic machinery in sharp_test.hpp does not apply.
 * This module tests the pairwise implication of the design instead: for every
 * pair of judges (j, j') and every treatment arm d, the differences
 * p_j - p_{j'} and q^d_j - q^d_{j'} must share a sign, where q^1 is the mean
 * of Y*D and q^0 the mean of -Y*(1-D).  Each difference gets a confidence
 * interval of half-width c derived from a least-favorable Bernoulli(1/2)
 * simulation, and a pair rejects when the intervals certify opposite signs.
 * A Bonferroni cascade over pairs and arms keeps the overall level at alpha
 * for any sample size.
 */

namespace sharpiv {

struct JudgeSummary {
  double judge = 0.0;   // instrument value identifying the judge
  std::int64_t n = 0;   // cases handled
  double p_hat = 0.0;   // treated share
  double q1_hat = 0.0;  // mean of Y*D
  double q0_hat = 0.0;  // mean of -Y*(1-D)
};

struct PairDecision {
  int j = 0;  // indices into FiniteResult::judges
  int jp = 0;
  double delta_p = 0.0;  // judge j minus judge jp
  double delta_q1 = 0.0;
  double delta_q0 = 0.0;
  double c_hat = 0.0;  // interval half-width shared by all three deltas
  double cs_p_lo = 0.0, cs_p_hi = 0.0;
  double cs_q1_lo = 0.0, cs_q1_hi = 0.0;
  double cs_q0_lo = 0.0, cs_q0_hi = 0.0;
  bool rejected = false;
  std::vector<std::string> events;  // which sign conflicts fired
};

struct FiniteConfig {
  double alpha = 0.05;
  std::int64_t b_sim = 1'000'000;  // simulation draws behind each width
  std::uint64_t seed = 0;
  int threads = 0;  // 0 = all hardware threads
};

struct FiniteResult {
  bool reject = false;
  double alpha = 0.0;
  double alpha_pair = 0.0;   // 2*alpha / (J*(J-1)), level per judge pair
  double alpha_width = 0.0;  // alpha_pair / 4, level per interval tail
  std::size_t n = 0;
  int n_judges = 0;
  std::int64_t b_sim = 0;
  std::uint64_t seed = 0;
  std::vector<JudgeSummary> judges;  // ascending by instrument value
  std::vector<PairDecision> pairs;   // lexicographic over (j, jp), j < jp
};

/* Memo of simulated widths keyed by unordered case-count pairs.  A Monte
 * Carlo driver can hand the same cache to every replication so that repeated
 * count pairs are simulated once. */
struct WidthCache {
  std::mutex mu;
  std::map<std::pair<std::int64_t, std::int64_t>, double> widths;
};

/* Half-width for a pair of judges with n_star cases each: the smallest point
 * c on the grid {-1, ..., -1/n*, 0, 1/n*, ..., 1} such that the simulated
 * difference of two Bernoulli(1/2) sample means exceeds c with frequency at
 * most alpha_width.  Requires n_star >= 1, 0 < alpha_width < 0.5, b_sim >= 1. */
double fs_critical_width(std::int64_t n_star, double alpha_width,
                         std::int64_t b_sim, std::uint64_t seed);

/* Same, for judges with different case counts; the grid becomes the support
 * of k/n_j - m/n_jp. */
double fs_critical_width(std::int64_t n_j, std::int64_t n_jp,
                         double alpha_width, std::int64_t b_sim,
                         std::uint64_t seed);

/* Applies the sign-conflict rule to one pair of judge summaries. */
PairDecision fs_pair_test(const JudgeSummary& sj, const JudgeSummary& sk,
                          double c_p, double c_q1, double c_q0);

/* Runs the full pairwise test.  The dataset must have a binary outcome and a
 * single instrument column whose distinct values index the judges.  An
 * optional width cache is consulted before simulating. */
FiniteResult run_finite_sample_test(const Dataset& ds, const FiniteConfig& cfg,
                                    WidthCache* cache = nullptr);

}  // namespace sharpiv
