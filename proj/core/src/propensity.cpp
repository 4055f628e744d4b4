#include "sharpiv/propensity.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "sharpiv/errors.hpp"
#include "sharpiv/rng.hpp"

namespace sharpiv {

namespace {

constexpr double kProbClamp = 1e-12;
constexpr double kSeparationIndex = 30.0;
constexpr std::uint64_t kSaltWeights = 0x73746867696577ull;

double clamp_prob(double p) {
  return std::min(1.0 - kProbClamp, std::max(kProbClamp, p));
}

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

const char* pscore_method_name(PscoreMethod m) {
  switch (m) {
    case PscoreMethod::Frequency: return "freq";
    case PscoreMethod::Probit: return "probit";
    case PscoreMethod::Logit: return "logit";
  }
  return "freq";
}

const char* weight_dist_name(WeightDist d) {
  switch (d) {
    case WeightDist::Normal1: return "normal1";
    case WeightDist::Exp1: return "exp1";
    case WeightDist::Ones: return "ones";
  }
  return "normal1";
}

namespace detail {

double link_value(PscoreMethod link, double eta) {
  if (link == PscoreMethod::Logit)
    return eta >= 0.0 ? 1.0 / (1.0 + std::exp(-eta))
                      : std::exp(eta) / (1.0 + std::exp(eta));
  return rng::normal_cdf(eta);
}

namespace {

/* weighted mean log-likelihood at eta = X theta; probabilities clamped for
 * evaluation only */
double mean_loglik(const Eigen::MatrixXd& X, const std::vector<std::int8_t>& d,
                   PscoreMethod link, const double* w,
                   const Eigen::VectorXd& theta) {
  const Eigen::Index n = X.rows();
  const Eigen::VectorXd eta = X * theta;
  double f = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double wi = w ? w[i] : 1.0;
    double li;
    if (link == PscoreMethod::Logit) {
      li = (d[i] ? eta[i] : 0.0) - softplus(eta[i]);
    } else {
      const double p = clamp_prob(rng::normal_cdf(eta[i]));
      const double q = clamp_prob(rng::normal_cdf(-eta[i]));
      li = d[i] ? std::log(p) : std::log(q);
    }
    f += wi * li;
  }
  return f / static_cast<double>(n);
}

}  // namespace

MleOutcome fit_binary_mle(const Eigen::MatrixXd& X,
                          const std::vector<std::int8_t>& d, PscoreMethod link,
                          const double* w, const Eigen::VectorXd* warm) {
  const Eigen::Index n = X.rows();
  const Eigen::Index k = X.cols();
  constexpr int kMaxIter = 200;
  constexpr double kGradTol = 1e-8;
  constexpr double kStepTol = 1e-10;

  MleOutcome out;
  Eigen::VectorXd theta = warm ? *warm : Eigen::VectorXd::Zero(k);
  double f = mean_loglik(X, d, link, w, theta);

  Eigen::VectorXd g(k), s1(n), s2(n);
  Eigen::MatrixXd H(k, k);

  for (int iter = 0; iter < kMaxIter; ++iter) {
    out.iterations = iter;
    const Eigen::VectorXd eta = X * theta;

    bool all_treated_far = true, all_control_far = true;
    bool any_treated = false, any_control = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double wi = w ? w[i] : 1.0;
      if (link == PscoreMethod::Logit) {
        const double p = link_value(PscoreMethod::Logit, eta[i]);
        s1[i] = wi * (static_cast<double>(d[i]) - p);
        s2[i] = wi * p * (1.0 - p);
      } else {
        const double p = clamp_prob(rng::normal_cdf(eta[i]));
        const double q = clamp_prob(rng::normal_cdf(-eta[i]));
        const double phi = rng::normal_pdf(eta[i]);
        s1[i] = wi * (d[i] ? phi / p : -phi / q);
        s2[i] = wi * phi * phi / (p * q);
      }
      if (d[i]) {
        any_treated = true;
        if (eta[i] <= kSeparationIndex) all_treated_far = false;
      } else {
        any_control = true;
        if (eta[i] >= -kSeparationIndex) all_control_far = false;
      }
    }
    g = (X.transpose() * s1) / static_cast<double>(n);

    if (g.lpNorm<Eigen::Infinity>() < kGradTol) {
      out.converged = true;
      break;
    }
    if ((any_treated && all_treated_far) || (any_control && all_control_far)) {
      out.separated = true;
      break;
    }

    H = (X.transpose() * (X.array().colwise() * s2.array()).matrix()) /
        static_cast<double>(n);

    /* Fisher step; ridge until we get an ascent direction (the weighted
     * information can be indefinite under negative multiplier weights) */
    Eigen::VectorXd delta;
    const double scale = std::max(1e-12, H.diagonal().cwiseAbs().maxCoeff());
    double ridge = 0.0;
    bool ascent = false;
    for (int r = 0; r < 12 && !ascent; ++r) {
      Eigen::MatrixXd Hr = H;
      if (ridge > 0.0)
        Hr.diagonal().array() += ridge;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(Hr);
      if (ldlt.info() == Eigen::Success) {
        delta = ldlt.solve(g);
        ascent = std::isfinite(delta.squaredNorm()) && g.dot(delta) > 0.0;
      }
      ridge = ridge == 0.0 ? scale * 1e-8 : ridge * 100.0;
    }
    if (!ascent) delta = g;

    double t = 1.0;
    bool improved = false;
    for (int h = 0; h < 60; ++h, t *= 0.5) {
      const Eigen::VectorXd cand = theta + t * delta;
      const double fc = mean_loglik(X, d, link, w, cand);
      if (fc > f) {
        theta = cand;
        f = fc;
        improved = true;
        break;
      }
      if (t * delta.norm() < kStepTol) break;
    }
    if (!improved || t * delta.norm() < kStepTol) {
      /* stalled: accept only if effectively at a stationary point */
      out.converged = g.lpNorm<Eigen::Infinity>() < 1e-6;
      break;
    }
  }
  /* The score can vanish long before the index passes the runaway bound:
   * under clean separation the gradient decays like the link tail, so the
   * loop above "converges" onto a perfect classifier.  Call that separation
   * too: every positively weighted case fitted onto its own class. */
  if (out.converged) {
    const Eigen::VectorXd eta = X * theta;
    constexpr double kClassifyTol = 1e-6;
    bool all_extreme = true;
    bool any = false;
    for (Eigen::Index i = 0; i < n && all_extreme; ++i) {
      if (w && !(w[i] > 0.0)) continue;
      any = true;
      const double p = link_value(link, eta[i]);
      if (d[i] ? p < 1.0 - kClassifyTol : p > kClassifyTol)
        all_extreme = false;
    }
    if (any && all_extreme) {
      out.separated = true;
      out.converged = false;
    }
  }
  out.theta = theta;
  out.loglik = f * static_cast<double>(n);
  return out;
}

}  // namespace detail

PropensityFit fit_frequency(const Dataset& ds) {
  validate(ds);
  if (ds.kz() != 1)
    fail(ErrorKind::Config,
         "frequency propensity needs exactly one discrete instrument column");
  const auto& z = ds.z[0];
  const std::size_t n = ds.n();

  std::map<double, std::int32_t> index;
  for (double v : z) index.emplace(v, 0);
  std::int32_t next = 0;
  for (auto& kv : index) kv.second = next++;

  PropensityFit fit;
  fit.method = PscoreMethod::Frequency;
  fit.judge_value.resize(index.size());
  fit.judge_count.assign(index.size(), 0);
  std::vector<std::int64_t> treated(index.size(), 0);
  fit.judge_of.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::int32_t j = index.at(z[i]);
    fit.judge_of[i] = j;
    fit.judge_count[j] += 1;
    treated[j] += ds.d[i];
  }
  for (const auto& kv : index) fit.judge_value[kv.second] = kv.first;
  fit.judge_p.resize(index.size());
  for (std::size_t j = 0; j < index.size(); ++j)
    fit.judge_p[j] = static_cast<double>(treated[j]) /
                     static_cast<double>(fit.judge_count[j]);

  fit.p_hat.resize(n);
  double ll = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = fit.judge_p[fit.judge_of[i]];
    fit.p_hat[i] = p;
    if (ds.d[i]) {
      if (p > 0.0) ll += std::log(p);
    } else {
      if (p < 1.0) ll += std::log(1.0 - p);
    }
  }
  fit.loglik = ll;
  return fit;
}

PropensityFit fit_mle(const Dataset& ds, PscoreMethod link, bool include_x) {
  validate(ds);
  if (link == PscoreMethod::Frequency)
    fail(ErrorKind::Config, "fit_mle needs a probit or logit link");
  const std::size_t n = ds.n();
  const std::size_t kz = ds.kz();
  const std::size_t kx = include_x ? ds.kx() : 0;
  const std::size_t k = 1 + kz + kx;
  if (n < k)
    fail(ErrorKind::Numerics, "fewer rows than design columns");

  PropensityFit fit;
  fit.method = link;
  fit.design.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  fit.design_names.push_back("(intercept)");
  for (std::size_t i = 0; i < n; ++i) fit.design(i, 0) = 1.0;
  std::size_t col = 1;
  for (std::size_t c = 0; c < kz; ++c, ++col) {
    fit.design_names.push_back(ds.z_names[c]);
    for (std::size_t i = 0; i < n; ++i) fit.design(i, col) = ds.z[c][i];
  }
  for (std::size_t c = 0; c < kx; ++c, ++col) {
    fit.design_names.push_back(ds.x_names[c]);
    for (std::size_t i = 0; i < n; ++i) fit.design(i, col) = ds.x[c][i];
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(fit.design);
  if (static_cast<std::size_t>(qr.rank()) < k) {
    const auto perm = qr.colsPermutation().indices();
    const std::string name =
        fit.design_names[static_cast<std::size_t>(perm[qr.rank()])];
    fail(ErrorKind::Numerics,
         "design is rank deficient (column '" + name + "' is collinear)");
  }

  /* cold start at the intercept-only solution */
  double dbar = 0.0;
  for (std::size_t i = 0; i < n; ++i) dbar += ds.d[i];
  dbar = std::min(1.0 - 1e-6, std::max(1e-6, dbar / static_cast<double>(n)));
  Eigen::VectorXd warm = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
  warm[0] = link == PscoreMethod::Logit ? std::log(dbar / (1.0 - dbar))
                                        : rng::normal_quantile(dbar);

  const auto res = detail::fit_binary_mle(fit.design, ds.d, link, nullptr, &warm);
  if (res.separated)
    fail(ErrorKind::Numerics,
         "quasi-separation detected: the likelihood has no interior maximum "
         "because the fitted index classifies every case perfectly");
  if (!res.converged)
    fail(ErrorKind::Numerics,
         "propensity MLE did not converge in 200 iterations");
  fit.theta = res.theta;
  fit.loglik = res.loglik;
  fit.converged = true;
  fit.iterations = res.iterations;
  fit.p_hat.resize(n);
  const Eigen::VectorXd eta = fit.design * fit.theta;
  for (std::size_t i = 0; i < n; ++i)
    fit.p_hat[i] = detail::link_value(link, eta[static_cast<Eigen::Index>(i)]);
  return fit;
}

RefitStatus refit_weighted_into(const PropensityFit& fit,
                                const std::vector<std::int8_t>& d,
                                const double* w, std::vector<double>& p_out,
                                Eigen::VectorXd* theta_out) {
  const std::size_t n = d.size();
  p_out.resize(n);

  if (fit.method == PscoreMethod::Frequency) {
    const std::size_t J = fit.judge_p.size();
    std::vector<double> sw(J, 0.0), swd(J, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto j = static_cast<std::size_t>(fit.judge_of[i]);
      sw[j] += w[i];
      if (d[i]) swd[j] += w[i];
    }
    for (std::size_t j = 0; j < J; ++j)
      if (!(sw[j] > 0.0))
        return {true, "judge " + format_double(fit.judge_value[j]) +
                          " has total replicate weight <= 0"};
    for (std::size_t i = 0; i < n; ++i) {
      const auto j = static_cast<std::size_t>(fit.judge_of[i]);
      p_out[i] = swd[j] / sw[j];
    }
    return {};
  }

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += w[i];
  if (!(total > 0.0)) return {true, "total replicate weight <= 0"};

  const auto res =
      detail::fit_binary_mle(fit.design, d, fit.method, w, &fit.theta);
  if (res.separated) return {true, "quasi-separation under replicate weights"};
  if (!res.converged)
    return {true, "weighted MLE did not converge under replicate weights"};
  const Eigen::VectorXd eta = fit.design * res.theta;
  for (std::size_t i = 0; i < n; ++i)
    p_out[i] = detail::link_value(fit.method, eta[static_cast<Eigen::Index>(i)]);
  if (theta_out) *theta_out = res.theta;
  return {};
}

RefitResult refit_weighted(const Dataset& ds, const PropensityFit& fit,
                           const std::vector<double>& w) {
  if (w.size() != ds.n())
    fail(ErrorKind::Config, "weight vector length must match dataset");
  RefitResult out;
  out.fit = fit;
  Eigen::VectorXd theta;
  const RefitStatus st =
      refit_weighted_into(fit, ds.d, w.data(), out.fit.p_hat, &theta);
  out.degenerate = st.degenerate;
  out.reason = st.reason;
  if (st.degenerate) return out;
  if (fit.method == PscoreMethod::Frequency) {
    for (std::size_t i = 0; i < ds.n(); ++i)
      out.fit.judge_p[static_cast<std::size_t>(fit.judge_of[i])] =
          out.fit.p_hat[i];
  } else {
    out.fit.theta = theta;
  }
  return out;
}

double BootstrapWeights::at(int b, std::size_t i, int attempt) const {
  const rng::Stream s{rng::key3(seed, kSaltWeights,
                                static_cast<std::uint64_t>(b) * 4u +
                                    static_cast<std::uint64_t>(attempt))};
  switch (dist) {
    case WeightDist::Normal1: return 1.0 + s.normal(i);
    case WeightDist::Exp1: return s.exponential(i);
    case WeightDist::Ones: return 1.0;
  }
  return 1.0;
}

void BootstrapWeights::fill(int b, int attempt, std::vector<double>& w) const {
  w.resize(n);
  const rng::Stream s{rng::key3(seed, kSaltWeights,
                                static_cast<std::uint64_t>(b) * 4u +
                                    static_cast<std::uint64_t>(attempt))};
  switch (dist) {
    case WeightDist::Normal1:
      for (std::size_t i = 0; i < n; ++i) w[i] = 1.0 + s.normal(i);
      break;
    case WeightDist::Exp1:
      for (std::size_t i = 0; i < n; ++i) w[i] = s.exponential(i);
      break;
    case WeightDist::Ones:
      for (std::size_t i = 0; i < n; ++i) w[i] = 1.0;
      break;
  }
}

BootstrapWeights draw_weights(std::size_t n, int B, WeightDist dist,
                              std::uint64_t seed) {
  if (B < 1) fail(ErrorKind::Config, "bootstrap replicate count must be >= 1");
  return BootstrapWeights{n, B, dist, seed};
}

}  // namespace sharpiv
