#include "sharpiv/covariate.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>

#include "sharpiv/errors.hpp"
#include "sharpiv/parallel.hpp"
#include "sharpiv/rng.hpp"

namespace sharpiv {

namespace {

constexpr std::uint64_t kSaltCell = 0x6c6c65632d766f63ull;

Eigen::MatrixXd poly_design(const std::vector<double>& p,
                            const std::vector<std::size_t>& rows, int degree) {
  Eigen::MatrixXd Q(rows.size(), degree + 1);
  for (Eigen::Index r = 0; r < Q.rows(); ++r) {
    double v = 1.0;
    for (int c = 0; c <= degree; ++c) {
      Q(r, c) = v;
      v *= p[rows[static_cast<std::size_t>(r)]];
    }
  }
  return Q;
}

double r_squared(const Eigen::VectorXd& v, const Eigen::VectorXd& resid) {
  const double mean = v.mean();
  const double sst = (v.array() - mean).square().sum();
  if (sst == 0.0) return 1.0;
  return 1.0 - resid.squaredNorm() / sst;
}

/* Per-arm double-residual coefficients.  Unweighted fits use rank-revealing
 * QR (the projection on the propensity polynomial is well defined even when
 * the polynomial design is short of full rank); weighted fits solve normal
 * equations and report failure instead of throwing, since they run inside
 * bootstrap replicates. */
bool arm_beta(const Dataset& ds, const std::vector<double>& p_hat,
              const std::vector<std::size_t>& rows, int degree,
              const double* w, int arm, bool throwing,
              Eigen::VectorXd& beta, double* r2_y,
              std::vector<double>* r2_x) {
  const std::size_t k = ds.kx();
  const auto m = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd Q = poly_design(p_hat, rows, degree);

  Eigen::VectorXd yv(m);
  for (Eigen::Index r = 0; r < m; ++r) yv(r) = ds.y[rows[static_cast<std::size_t>(r)]];
  Eigen::MatrixXd X(m, static_cast<Eigen::Index>(k));
  for (std::size_t j = 0; j < k; ++j)
    for (Eigen::Index r = 0; r < m; ++r)
      X(r, static_cast<Eigen::Index>(j)) = ds.x[j][rows[static_cast<std::size_t>(r)]];

  Eigen::VectorXd eP;
  Eigen::MatrixXd eX(m, static_cast<Eigen::Index>(k));
  if (!w) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Q);
    eP = yv - Q * qr.solve(yv);
    if (r2_y) *r2_y = r_squared(yv, eP);
    for (std::size_t j = 0; j < k; ++j) {
      const Eigen::VectorXd xj = X.col(static_cast<Eigen::Index>(j));
      eX.col(static_cast<Eigen::Index>(j)) = xj - Q * qr.solve(xj);
      if (r2_x) (*r2_x)[j] = r_squared(xj, eX.col(static_cast<Eigen::Index>(j)));
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qrx(eX);
    if (qrx.rank() < static_cast<Eigen::Index>(k)) {
      const auto& perm = qrx.colsPermutation().indices();
      const auto offending = static_cast<std::size_t>(perm[qrx.rank()]);
      fail(ErrorKind::Numerics,
           "covariate '" + ds.x_names[offending] +
               "' is collinear after projecting on the propensity polynomial "
               "in arm d=" + std::to_string(arm));
    }
    beta = qrx.solve(eP);
    return true;
  }

  Eigen::VectorXd wv(m);
  for (Eigen::Index r = 0; r < m; ++r) wv(r) = w[rows[static_cast<std::size_t>(r)]];
  const Eigen::MatrixXd Qw = wv.asDiagonal() * Q;
  Eigen::LDLT<Eigen::MatrixXd> gram(Q.transpose() * Qw);
  if (gram.info() != Eigen::Success || gram.vectorD().minCoeff() <= 0.0) {
    if (throwing)
      fail(ErrorKind::Numerics, "weighted propensity polynomial fit is singular");
    return false;
  }
  eP = yv - Q * gram.solve(Qw.transpose() * yv);
  for (std::size_t j = 0; j < k; ++j) {
    const Eigen::VectorXd xj = X.col(static_cast<Eigen::Index>(j));
    eX.col(static_cast<Eigen::Index>(j)) = xj - Q * gram.solve(Qw.transpose() * xj);
  }
  const Eigen::MatrixXd eXw = wv.asDiagonal() * eX;
  Eigen::LDLT<Eigen::MatrixXd> gramx(eX.transpose() * eXw);
  if (gramx.info() != Eigen::Success || gramx.vectorD().minCoeff() <= 0.0) {
    if (throwing) fail(ErrorKind::Numerics, "weighted residual regression is singular");
    return false;
  }
  beta = gramx.solve(eXw.transpose() * eP);
  return true;
}

/* Betas for both arms; returns false (or throws) on a degenerate weighted
 * replicate. */
bool fit_betas(const Dataset& ds, const std::vector<double>& p_hat, int degree,
               const double* w, bool throwing, PartialLinearFit& plf) {
  std::vector<std::size_t> rows1, rows0;
  for (std::size_t i = 0; i < ds.n(); ++i)
    (ds.d[i] ? rows1 : rows0).push_back(i);
  plf.n1 = rows1.size();
  plf.n0 = rows0.size();
  plf.poly_degree = degree;
  const std::size_t k = ds.kx();
  plf.r2_x1.assign(k, 0.0);
  plf.r2_x0.assign(k, 0.0);
  if (k == 0) return true;
  if (rows1.empty() || rows0.empty()) {
    if (throwing)
      fail(ErrorKind::Validation, std::string("treatment arm d=") +
                                      (rows1.empty() ? "1" : "0") +
                                      " has no cases");
    return false;
  }
  Eigen::VectorXd b1, b0;
  if (!arm_beta(ds, p_hat, rows1, degree, w, 1, throwing, b1, &plf.r2_y1,
                &plf.r2_x1))
    return false;
  if (!arm_beta(ds, p_hat, rows0, degree, w, 0, throwing, b0, &plf.r2_y0,
                &plf.r2_x0))
    return false;
  plf.beta1.assign(b1.data(), b1.data() + b1.size());
  plf.beta0.assign(b0.data(), b0.data() + b0.size());
  return true;
}

}  // namespace

PartialLinearFit fit_partial_linear(const Dataset& ds,
                                    const PropensityFit& fit, int degree) {
  if (degree < 1) fail(ErrorKind::Config, "polynomial degree must be >= 1");
  if (fit.p_hat.size() != ds.n())
    fail(ErrorKind::Config, "propensity fit does not match dataset length");
  PartialLinearFit plf;
  fit_betas(ds, fit.p_hat, degree, nullptr, true, plf);
  return plf;
}

std::vector<double> adjust_outcome(const Dataset& ds,
                                   const PartialLinearFit& plf) {
  const std::size_t k = ds.kx();
  if (plf.beta1.size() != k || plf.beta0.size() != k)
    fail(ErrorKind::Config,
         "coefficient length does not match the covariate count");
  if (k == 0) return ds.y;
  std::vector<double> out(ds.n());
  for (std::size_t i = 0; i < ds.n(); ++i) {
    const std::vector<double>& beta = ds.d[i] ? plf.beta1 : plf.beta0;
    double idx = 0.0;
    for (std::size_t j = 0; j < k; ++j) idx += ds.x[j][i] * beta[j];
    out[i] = ds.y[i] - idx;
  }
  return out;
}

AdjustedTestResult run_adjusted_sharp_test(const Dataset& ds,
                                           const SharpConfig& cfg) {
  validate(ds);
  const PropensityFit fit = cfg.pscore == PscoreMethod::Frequency
                                ? fit_frequency(ds)
                                : fit_mle(ds, cfg.pscore, true);
  AdjustedTestResult out;
  out.partial_linear = fit_partial_linear(ds, fit, cfg.poly_degree);
  const std::vector<double> y_raw = adjust_outcome(ds, out.partial_linear);
  const NormalizedOutcome norm =
      normalize_outcome(y_raw, cfg.normalize, cfg.bounds_a, cfg.bounds_b);
  out.normalize_mode = norm.mode;
  out.norm_a = norm.a;
  out.norm_b = norm.b;
  out.norm_mean = norm.mean;
  out.norm_sd = norm.sd;

  Dataset prepared = ds;
  prepared.y = norm.y;

  ReplicateOutcomeHook hook;
  if (cfg.boot_refit_beta && ds.kx() > 0) {
    const int degree = cfg.poly_degree;
    hook = [&ds, &norm, degree](int, const std::vector<double>& w,
                                const std::vector<double>& p_b,
                                std::vector<double>& y_out) {
      PartialLinearFit rplf;
      if (!fit_betas(ds, p_b, degree, w.data(), false, rplf)) return false;
      y_out = adjust_outcome(ds, rplf);
      for (double& v : y_out) v = apply_normalization(v, norm);
      return true;
    };
  }
  out.test = detail::run_sharp_test_with_fit(prepared, fit, cfg, norm.mode, hook);
  return out;
}

std::vector<CellSplit> split_by_cells(const Dataset& ds,
                                      const std::vector<std::string>& columns,
                                      int min_n, int max_cells) {
  validate(ds);
  if (columns.empty()) fail(ErrorKind::Config, "no conditioning columns given");
  if (min_n < 1) fail(ErrorKind::Config, "minimum cell size must be >= 1");
  if (max_cells < 1) fail(ErrorKind::Config, "cell cap must be >= 1");

  struct ColRef {
    bool from_z;
    std::size_t idx;
  };
  std::vector<ColRef> refs;
  std::vector<bool> z_used(ds.kz(), false), x_used(ds.kx(), false);
  for (const std::string& name : columns) {
    auto zit = std::find(ds.z_names.begin(), ds.z_names.end(), name);
    if (zit != ds.z_names.end()) {
      const auto i = static_cast<std::size_t>(zit - ds.z_names.begin());
      if (z_used[i]) fail(ErrorKind::Config, "duplicate conditioning column '" + name + "'");
      z_used[i] = true;
      refs.push_back({true, i});
      continue;
    }
    auto xit = std::find(ds.x_names.begin(), ds.x_names.end(), name);
    if (xit != ds.x_names.end()) {
      const auto i = static_cast<std::size_t>(xit - ds.x_names.begin());
      if (x_used[i]) fail(ErrorKind::Config, "duplicate conditioning column '" + name + "'");
      x_used[i] = true;
      refs.push_back({false, i});
      continue;
    }
    fail(ErrorKind::Config, "unknown conditioning column '" + name + "'");
  }
  if (std::all_of(z_used.begin(), z_used.end(), [](bool b) { return b; }))
    fail(ErrorKind::Config,
         "conditioning on every instrument column leaves no instrument");

  std::map<std::vector<double>, std::vector<std::size_t>> groups;
  std::vector<double> key(refs.size());
  for (std::size_t i = 0; i < ds.n(); ++i) {
    for (std::size_t c = 0; c < refs.size(); ++c)
      key[c] = refs[c].from_z ? ds.z[refs[c].idx][i] : ds.x[refs[c].idx][i];
    groups[key].push_back(i);
  }
  if (groups.size() > static_cast<std::size_t>(max_cells))
    fail(ErrorKind::Config,
         std::to_string(groups.size()) + " distinct cells exceed the cap of " +
             std::to_string(max_cells));

  std::vector<CellSplit> out;
  out.reserve(groups.size());
  for (const auto& [values, rows] : groups) {
    CellSplit cell;
    for (std::size_t c = 0; c < refs.size(); ++c) {
      if (c) cell.label += ",";
      cell.label += columns[c] + "=" + format_double(values[c]);
    }
    Dataset& sub = cell.data;
    sub.y.reserve(rows.size());
    sub.d.reserve(rows.size());
    for (std::size_t i : rows) {
      sub.y.push_back(ds.y[i]);
      sub.d.push_back(ds.d[i]);
    }
    for (std::size_t j = 0; j < ds.kz(); ++j) {
      if (z_used[j]) continue;
      sub.z_names.push_back(ds.z_names[j]);
      std::vector<double> col;
      col.reserve(rows.size());
      for (std::size_t i : rows) col.push_back(ds.z[j][i]);
      sub.z.push_back(std::move(col));
    }
    for (std::size_t j = 0; j < ds.kx(); ++j) {
      if (x_used[j]) continue;
      sub.x_names.push_back(ds.x_names[j]);
      std::vector<double> col;
      col.reserve(rows.size());
      for (std::size_t i : rows) col.push_back(ds.x[j][i]);
      sub.x.push_back(std::move(col));
    }
    if (rows.size() < static_cast<std::size_t>(min_n)) {
      cell.skipped = true;
      cell.skip_reason = "cell size " + std::to_string(rows.size()) +
                         " below the minimum of " + std::to_string(min_n);
    }
    out.push_back(std::move(cell));
  }
  return out;
}

ConditionalTestResult run_conditional_sharp_test(
    const Dataset& ds, const SharpConfig& cfg,
    const std::vector<std::string>& columns) {
  const std::vector<CellSplit> cells =
      split_by_cells(ds, columns, cfg.min_cell_n, cfg.max_cells);

  ConditionalTestResult out;
  out.cells.resize(cells.size());
  for (const CellSplit& cell : cells)
    if (!cell.skipped) ++out.n_tested;
  if (out.n_tested == 0)
    fail(ErrorKind::Validation, "every cell falls below the minimum size");
  out.alpha_per_cell = cfg.alpha / out.n_tested;

  parallel_for(cells.size(), cfg.threads, [&](std::size_t c) {
    CellResult& res = out.cells[c];
    const CellSplit& cell = cells[c];
    res.label = cell.label;
    res.n = cell.data.n();
    res.skipped = cell.skipped;
    res.skip_reason = cell.skip_reason;
    if (cell.skipped) return;
    SharpConfig sub = cfg;
    sub.alpha = out.alpha_per_cell;
    sub.seed = rng::key3(cfg.seed, kSaltCell, static_cast<std::uint64_t>(c));
    sub.threads = 1;
    try {
      res.result = run_adjusted_sharp_test(cell.data, sub);
    } catch (const Error& e) {
      res.skipped = true;
      res.skip_reason = std::string(e.kind_name()) + ": " + e.what();
    }
  });

  for (const CellResult& res : out.cells)
    if (res.result && res.result->test.reject) out.reject = true;
  return out;
}

}  // namespace sharpiv
