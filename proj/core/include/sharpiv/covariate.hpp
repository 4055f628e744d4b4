#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sharpiv/dataset.hpp"
#include "sharpiv/propensity.hpp"
#include "sharpiv/sharp_test.hpp"

namespace sharpiv {

/* Double-residual partial-linear fit: within each treatment arm, outcome and
 * covariates are projected on a polynomial in the fitted propensity, then the
 * outcome residual is regressed on the covariate residuals (no intercept;
 * both sides are mean zero by construction). */
struct PartialLinearFit {
  std::vector<double> beta1, beta0;  // one coefficient per x column
  int poly_degree = 3;
  std::size_t n1 = 0, n0 = 0;
  double r2_y1 = 0.0, r2_y0 = 0.0;       // outcome-on-propensity fits
  std::vector<double> r2_x1, r2_x0;      // covariate-on-propensity fits
};

PartialLinearFit fit_partial_linear(const Dataset& ds,
                                    const PropensityFit& fit, int degree);

/* y_tilde[i] = y[i] - x_i . (d_i ? beta1 : beta0); identity when k = 0. */
std::vector<double> adjust_outcome(const Dataset& ds,
                                   const PartialLinearFit& plf);

struct AdjustedTestResult {
  TestResult test;
  PartialLinearFit partial_linear;
  NormalizeMode normalize_mode = NormalizeMode::None;
  double norm_a = 0.0, norm_b = 1.0, norm_mean = 0.0, norm_sd = 1.0;
};

/* Covariate-filtered pipeline: fit the propensity (parametric fits include
 * the x columns in the design), estimate the arm coefficients, subtract the
 * covariate index from the outcome, re-normalize, and run the sharp test on
 * the filtered outcome.  With k = 0 the output is bit-identical to
 * run_sharp_test.  cfg.boot_refit_beta re-estimates the arm coefficients
 * inside every bootstrap replicate (weighted fits, frozen normalization). */
AdjustedTestResult run_adjusted_sharp_test(const Dataset& ds,
                                           const SharpConfig& cfg);

struct CellSplit {
  std::string label;
  Dataset data;       // conditioning columns removed
  bool skipped = false;
  std::string skip_reason;
};

/* Partition rows by the exact joint value of the named columns (looked up
 * among z then x columns).  Cells come back sorted by value tuple; cells
 * smaller than min_n are flagged skipped.  More than max_cells distinct
 * values is an error, as is consuming every z column. */
std::vector<CellSplit> split_by_cells(const Dataset& ds,
                                      const std::vector<std::string>& columns,
                                      int min_n, int max_cells);

struct CellResult {
  std::string label;
  std::size_t n = 0;
  bool skipped = false;
  std::string skip_reason;
  std::optional<AdjustedTestResult> result;
};

struct ConditionalTestResult {
  std::vector<CellResult> cells;
  int n_tested = 0;
  double alpha_per_cell = 0.0;  // Bonferroni alpha / n_tested
  bool reject = false;          // any cell rejects at the per-cell level
};

/* Independent per-cell tests with derived seeds and a Bonferroni-combined
 * decision.  Cells without covariate columns left after the split run the
 * plain pipeline. */
ConditionalTestResult run_conditional_sharp_test(
    const Dataset& ds, const SharpConfig& cfg,
    const std::vector<std::string>& columns);

}  // namespace sharpiv
