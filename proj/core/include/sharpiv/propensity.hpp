#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "sharpiv/dataset.hpp"

namespace sharpiv {

enum class PscoreMethod { Frequency, Probit, Logit };

const char* pscore_method_name(PscoreMethod m);

/* Fitted propensity recipe.  p_hat is stored unclamped; the MLE variants keep
 * the design matrix so weighted refits are self-contained. */
struct PropensityFit {
  PscoreMethod method = PscoreMethod::Frequency;
  std::vector<double> p_hat;
  double loglik = 0.0;
  bool converged = true;
  int iterations = 0;

  /* frequency bookkeeping: judges densely re-indexed by ascending label */
  std::vector<std::int32_t> judge_of;
  std::vector<double> judge_value;
  std::vector<double> judge_p;
  std::vector<std::int64_t> judge_count;

  /* parametric bookkeeping */
  Eigen::VectorXd theta;  // intercept first, then z columns, then x columns
  Eigen::MatrixXd design;
  std::vector<std::string> design_names;
};

/* Cell-share estimator over a single discrete instrument column. */
PropensityFit fit_frequency(const Dataset& ds);

/* Probit/logit MLE on (1, z, [x]).  Damped Fisher scoring with step halving;
 * convergence at max |mean score| < 1e-8.  Throws on rank-deficient designs,
 * separation (|index| > 30 for every case of one class), or non-convergence
 * within 200 iterations. */
PropensityFit fit_mle(const Dataset& ds, PscoreMethod link,
                      bool include_x = true);

struct RefitStatus {
  bool degenerate = false;
  std::string reason;
};

/* Weighted refit of an existing recipe (frequency: weighted cell shares;
 * MLE: weighted likelihood warm-started at the unweighted solution).
 * Degenerate replicates (a judge's total weight <= 0, non-convergence under
 * extreme weights, separation) are reported, not thrown. */
RefitStatus refit_weighted_into(const PropensityFit& fit,
                                const std::vector<std::int8_t>& d,
                                const double* w, std::vector<double>& p_out,
                                Eigen::VectorXd* theta_out = nullptr);

struct RefitResult {
  PropensityFit fit;
  bool degenerate = false;
  std::string reason;
};

RefitResult refit_weighted(const Dataset& ds, const PropensityFit& fit,
                           const std::vector<double>& w);

enum class WeightDist { Normal1, Exp1, Ones };

const char* weight_dist_name(WeightDist d);

/* Mean-one variance-one multiplier weights, one stream per replicate.
 * at(b, i, attempt) is a pure function of (seed, b, attempt, i): replicate
 * vectors are independent of B, of thread scheduling, and of each other.
 * `attempt` > 0 selects the redraw streams used when a replicate degenerates. */
struct BootstrapWeights {
  std::size_t n = 0;
  int B = 0;
  WeightDist dist = WeightDist::Normal1;
  std::uint64_t seed = 0;

  double at(int b, std::size_t i, int attempt = 0) const;
  void fill(int b, int attempt, std::vector<double>& w) const;
};

BootstrapWeights draw_weights(std::size_t n, int B, WeightDist dist,
                              std::uint64_t seed);

namespace detail {

struct MleOutcome {
  Eigen::VectorXd theta;
  double loglik = 0.0;
  bool converged = false;
  bool separated = false;
  int iterations = 0;
};

/* Core optimizer shared by fit_mle and weighted refits; w may be null. */
MleOutcome fit_binary_mle(const Eigen::MatrixXd& X,
                          const std::vector<std::int8_t>& d, PscoreMethod link,
                          const double* w, const Eigen::VectorXd* warm);

double link_value(PscoreMethod link, double eta);

}  // namespace detail

}  // namespace sharpiv
