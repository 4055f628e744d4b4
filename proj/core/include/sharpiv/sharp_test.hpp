#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "sharpiv/cube_grid.hpp"
#include "sharpiv/dataset.hpp"
#include "sharpiv/propensity.hpp"

namespace sharpiv {

/* Moment slots are laid out cube-major: slot(c, d) = 2c + d, where d = 1
 * carries the treated-moment contrast and d = 0 the untreated one. */
inline std::size_t moment_slot(std::size_t cube, int d) {
  return 2 * cube + static_cast<std::size_t>(d);
}

struct MomentDetail {
  /* per cube: cell means entering the contrast (already normalized) */
  std::vector<double> m1_p1, m1_p2, m0_p1, m0_p2, w_p1, w_p2;
};

struct MomentEstimates {
  std::size_t ncubes = 0;
  std::vector<double> nu;  // 2 * ncubes, slot(c,d)
  MomentDetail detail;
};

/* nu_d(l) plug-in over the cube grid.  ds.y must already lie in [0,1];
 * optional multiplier weights w turn every cell mean into a weighted mean
 * normalized by the total weight. */
MomentEstimates estimate_nu(const Dataset& ds, const PropensityFit& fit,
                            const CubeGrid& grid,
                            const std::vector<double>* w = nullptr);

/* Optional per-replicate outcome re-adjustment (used when nuisance
 * coefficients are re-estimated inside the bootstrap).  Returns false to
 * flag the replicate degenerate. */
using ReplicateOutcomeHook =
    std::function<bool(int b, const std::vector<double>& w,
                       const std::vector<double>& p_b,
                       std::vector<double>& y_out)>;

struct BootstrapRun {
  int B = 0;
  std::size_t ncubes = 0;
  std::vector<double> nu_b;     // B rows of 2*ncubes, row b at offset b*2*ncubes
  int degenerate_redraws = 0;   // replicates that needed at least one redraw
};

/* One weighted re-estimate of the whole moment vector per replicate: redraw
 * weights, refit the propensity (and re-adjust the outcome if hooked), then
 * recompute nu.  Degenerate replicates are redrawn on derived sub-streams up
 * to 3 times; more than 5% degenerate replicates is an error. */
BootstrapRun run_bootstrap(const Dataset& ds, const PropensityFit& fit,
                           const CubeGrid& grid, const BootstrapWeights& bw,
                           int threads = 0,
                           const ReplicateOutcomeHook& hook = {});

struct SigmaEstimates {
  std::vector<double> sigma2;     // raw bootstrap variance of sqrt(n) nu
  std::vector<double> sigma_eps;  // sqrt of eps-floored variance
};

/* sigma2[s] = (n/B) sum_b (nu_b - mean_b)^2, centered at the bootstrap mean */
SigmaEstimates estimate_sigma(const BootstrapRun& boot, std::size_t n,
                              double eps);

struct GmsConstants {
  double a_n = 0.0;  // 0.15 ln n
  double b_n = 0.0;  // 0.85 ln n / ln ln n
};

GmsConstants gms_constants(std::size_t n);  // requires n >= 3

/* psi_d(l) = -B_n when the studentized moment sits below -a_n, else 0. */
std::vector<double> gms_flags(const std::vector<double>& nu,
                              const std::vector<double>& sigma_eps,
                              std::size_t n);

/* T = sum over slots of max(sqrt(n) nu / sigma_eps, 0)^2 * omega */
double test_statistic(const std::vector<double>& nu,
                      const std::vector<double>& sigma_eps,
                      const CubeGrid& grid, std::size_t n);

/* T^b = sum over slots of max(sqrt(n)(nu^b - nu)/sigma_eps + psi, 0)^2 omega */
std::vector<double> bootstrap_statistics(const BootstrapRun& boot,
                                         const std::vector<double>& nu,
                                         const std::vector<double>& sigma_eps,
                                         const std::vector<double>& psi,
                                         const CubeGrid& grid, std::size_t n);

/* eta-lifted empirical quantile: the ceil((1-alpha+eta) B)-th order
 * statistic plus eta. */
double critical_value(const std::vector<double>& boot_stats, double alpha,
                      double eta);

double p_value(const std::vector<double>& boot_stats, double statistic);

enum class TestKind { Sharp, Finite };

struct SharpConfig {
  double alpha = 0.05;
  int B = 800;
  int QY = 0;  // 0 resolves to 2 for binary outcomes, 5 otherwise
  int QP = 5;
  double eps = 1e-6;
  double eta = 1e-6;
  PscoreMethod pscore = PscoreMethod::Frequency;
  WeightDist weights = WeightDist::Normal1;
  std::uint64_t seed = 0;
  int threads = 0;  // 0 = all hardware threads
  NormalizeMode normalize = NormalizeMode::Auto;
  double bounds_a = 0.0, bounds_b = 1.0;
  int poly_degree = 3;
  bool boot_refit_beta = false;
  int min_cell_n = 30;
  int max_cells = 50;
};

struct CubeRow {
  CubeIndex cube;
  int d = 0;
  double nu = 0.0;
  double sigma = 0.0;  // eps-floored standard deviation
  double tstd = 0.0;   // sqrt(n) nu / sigma
  double gms = 0.0;    // psi value
};

struct TestResult {
  double statistic = 0.0;
  double critical_value = 0.0;
  double p_value = 1.0;
  bool reject = false;
  std::size_t n = 0;
  int B = 0;
  int QY = 0, QP = 0;
  std::size_t grid_count = 0;
  double alpha = 0.05, eps = 1e-6, eta = 1e-6;
  double a_n = 0.0, b_n = 0.0;
  PscoreMethod pscore = PscoreMethod::Frequency;
  WeightDist weights = WeightDist::Normal1;
  std::uint64_t seed = 0;
  NormalizeMode normalize_resolved = NormalizeMode::None;
  int degenerate_redraws = 0;
  std::vector<CubeRow> cubes;        // cube-major, d = 0 then d = 1
  std::vector<double> boot_stats;    // not serialized
};

/* Full pipeline on a covariate-free dataset: propensity, normalization,
 * grid, bootstrap, moment selection, decision.  Datasets with x columns must
 * go through the adjusted pipeline instead. */
TestResult run_sharp_test(const Dataset& ds, const SharpConfig& cfg);

namespace detail {

/* Pipeline tail for callers that already fitted the propensity and prepared
 * the [0,1] outcome (the adjusted pipeline).  `normalize_resolved` is echoed
 * into the result. */
TestResult run_sharp_test_with_fit(const Dataset& ds, const PropensityFit& fit,
                                   const SharpConfig& cfg,
                                   NormalizeMode normalize_resolved,
                                   const ReplicateOutcomeHook& hook = {});

}  // namespace detail

}  // namespace sharpiv
