#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sharpiv/dataset.hpp"
#include "sharpiv/finite_sample.hpp"
#include "sharpiv/sharp_test.hpp"

/* Synthetic judge designs used for calibration runs and power studies, plus
 * the Monte Carlo driver that wires them to the tests. */

namespace sharpiv {

/* Binary-outcome design with equally spaced judge leniencies.
 *
 * Each case draws a type: always-taker (mass p_a), never-taker (mass p_n) or
 * complier (the rest).  Compliers are treated when their latent cost falls
 * below the judge-specific threshold, which makes P(D=1 | judge j) = p_j with
 * p_j = p_a + (j-1)/(J-1) * (1 - p_a - p_n).  Compliers realize Y = D; the
 * outcome of non-compliers is Bernoulli with a judge-specific rate r(p_j)
 * built so that E[Y | p_j] stays linear in p_j, with slope controlled by
 * lambda in [0, 1].  lambda = 0 satisfies the design; lambda > 0 lets the
 * judge shift non-complier outcomes (an exclusion violation), yet E[Y | p_j]
 * remains exactly linear, so tests that only check linearity of the mean
 * stay blind to it. */
struct FllBinaryConfig {
  int J = 20;             // judges, assigned round-robin blocks of n/J cases
  std::int64_t n = 1000;  // total cases
  double p_a = 0.2;       // always-taker mass
  double p_n = 0.2;       // never-taker mass
  double lambda = 0.0;    // outcome-rate slope for non-compliers
};

/* Treated shares p_1..p_J implied by the config. */
std::vector<double> fll_judge_propensities(const FllBinaryConfig& cfg);

/* Non-complier outcome rate at treated share p. */
double fll_noncomplier_rate(const FllBinaryConfig& cfg, double p);

/* Population mean outcome E[Y | p_j] at treated share p. */
double fll_mean_outcome(const FllBinaryConfig& cfg, double p);

Dataset gen_fll_binary(const FllBinaryConfig& cfg, std::uint64_t seed);

/* Continuous-outcome design with latent Gaussian errors.
 *
 * (U0, U1, U, Z*) is four-variate normal with unit variances,
 * corr(U0,U) = -0.5, corr(U1,U) = 0.5, corr(U0,U1) = 0, corr(U,Z*) = 0 and
 * corr(U_d, Z*) = delta1.  The instrument Z concentrates Z* onto the L-1
 * interior quantile cutoffs Phi^{-1}(l/L).  Treatment is D = 1{Z > U} when
 * delta2 = 0; any nonzero delta2 splits judges into two groups with opposite
 * rankings (D = 1{Z > U} when U >= U0, else D = 1{1 - Z > U}).  Outcomes are
 * Y_d = alpha_d + X beta_d + delta3 Z + U_d with alpha_0 = 0, alpha_1 = 1 and
 * X ~ N(0,1) independent of everything else.  The dataset carries an "x"
 * column only when some beta is nonzero, so generated data routes to the
 * covariate-adjusted pipeline exactly when covariates enter the outcome.
 *
 * delta1 != 0 breaks instrument independence, delta2 != 0 breaks
 * monotonicity, delta3 != 0 breaks exclusion; all zero satisfies the design.
 */
struct GaussianContinuousConfig {
  int L = 21;             // quantile cells; judges are the L-1 cutoffs
  std::int64_t n = 1000;  // total cases
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
  double beta1 = 0.0;
  double beta0 = 0.0;
  /* Assign exactly n/(L-1) cases to each judge instead of sampling judge
   * membership.  Only valid when delta1 = 0 (then Z* is independent of the
   * latent errors, so stratifying does not change the within-judge law) and
   * n is divisible by L-1. */
  bool equal_judge_counts = false;
};

Dataset gen_gaussian_continuous(const GaussianContinuousConfig& cfg,
                                std::uint64_t seed);

/* Same draw with the latent variables exposed (for distributional checks). */
struct GaussianLatents {
  Dataset data;
  std::vector<double> u0, u1, u, zstar;
  std::vector<double> y1, y0;  // both potential outcomes
};
GaussianLatents gen_gaussian_with_latents(const GaussianContinuousConfig& cfg,
                                          std::uint64_t seed);

/* Analytic oracle for a piecewise design on p in (0,1): treated outcomes
 * average 1 below p = 1/2 and p above; untreated average 0 below and p above.
 * The implied moments are E[YD|P=p] = p or p^2 and E[Y(1-D)|P=p] = 0 or
 * p(1-p), and the slope of E[Y|P=p] is 1 everywhere.  w_* are difference
 * quotients (E[.|p'] - E[.|p]) / (p' - p). */
struct Example1Slopes {
  double w_y = 0.0;     // slope of E[Y | P]
  double w_yd = 0.0;    // slope of E[Y D | P]
  double w_y1md = 0.0;  // slope of E[Y (1-D) | P]
};
Example1Slopes example1_oracle(double p, double p_prime);
double example1_eyd(double p);    // E[Y D | P = p]
double example1_ey1md(double p);  // E[Y (1-D) | P = p]

/* Monte Carlo driver. */
enum class DgpKind { FllBinary, GaussianContinuous };

struct McConfig {
  DgpKind dgp = DgpKind::FllBinary;
  FllBinaryConfig fll;
  GaussianContinuousConfig gaussian;
  TestKind test = TestKind::Sharp;
  SharpConfig sharp;    // per-replication seeds are derived; sharp.seed unused
  FiniteConfig finite;  // finite.seed unused, same reason
  double binarize = 0.5;  // threshold 1{Y >= t} when the exact test needs
                          // a binary outcome
  int reps = 1;
  std::uint64_t seed = 0;
  int threads = 0;
};

struct RepFailure {
  int rep = 0;
  std::string kind;
  std::string message;
};

struct SimReport {
  int reps = 0;
  int completed = 0;   // replications that produced a decision
  int rejections = 0;
  double rejection_rate = 0.0;  // rejections / completed
  std::vector<std::int8_t> decisions;  // 1 reject, 0 accept, -1 failed
  std::vector<RepFailure> failures;
  std::uint64_t seed = 0;
};

/* Runs cfg.reps independent draws of the configured design through the
 * configured test.  Replications run in parallel with one inner thread each;
 * every replication's dataset and test randomness derive from (seed, rep), so
 * the report is identical for any thread count.  A replication that throws
 * is recorded as a failure, not dropped silently. */
SimReport run_monte_carlo(const McConfig& cfg);

}  // namespace sharpiv
