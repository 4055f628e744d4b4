#include "sharpiv/dgp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "sharpiv/covariate.hpp"
#include "sharpiv/errors.hpp"
#include "sharpiv/parallel.hpp"
#include "sharpiv/rng.hpp"

namespace sharpiv {

namespace {

constexpr std::uint64_t kSaltRep = 0x7065722d636dull;
constexpr std::uint64_t kSaltTest = 0x747365742d636dull;

void check_fll(const FllBinaryConfig& cfg) {
  if (cfg.J < 2)
    fail(ErrorKind::Config, "need at least two judges, got " +
                                std::to_string(cfg.J));
  if (cfg.n < 1) fail(ErrorKind::Config, "need at least one case");
  if (cfg.p_a < 0.0 || cfg.p_n < 0.0 || cfg.p_a + cfg.p_n > 1.0)
    fail(ErrorKind::Config,
         "type masses must be nonnegative with p_a + p_n <= 1");
  if (cfg.lambda < 0.0 || cfg.lambda > 1.0)
    fail(ErrorKind::Config, "lambda must lie in [0,1], got " +
                                std::to_string(cfg.lambda));
  if (cfg.lambda != 0.0 && cfg.p_a + cfg.p_n >= 1.0)
    fail(ErrorKind::Config,
         "lambda != 0 needs a complier population (p_a + p_n < 1)");
  if (cfg.p_a + cfg.p_n > 0.0) {
    for (double p : fll_judge_propensities(cfg)) {
      const double r = fll_noncomplier_rate(cfg, p);
      if (!(r >= 0.0 && r <= 1.0))
        fail(ErrorKind::Config,
             "non-complier outcome rate " + std::to_string(r) +
                 " at treated share " + std::to_string(p) +
                 " falls outside [0,1]");
    }
  }
}

}  // namespace

std::vector<double> fll_judge_propensities(const FllBinaryConfig& cfg) {
  if (cfg.J < 2)
    fail(ErrorKind::Config, "need at least two judges, got " +
                                std::to_string(cfg.J));
  std::vector<double> p(static_cast<std::size_t>(cfg.J));
  const double span = 1.0 - cfg.p_a - cfg.p_n;
  for (int j = 0; j < cfg.J; ++j)
    p[static_cast<std::size_t>(j)] =
        cfg.p_a + span * static_cast<double>(j) / (cfg.J - 1);
  return p;
}

double fll_noncomplier_rate(const FllBinaryConfig& cfg, double p) {
  const double s = cfg.p_a + cfg.p_n;
  if (s <= 0.0)
    fail(ErrorKind::Config,
         "all cases are compliers; there is no non-complier outcome rate");
  double shift = 0.0;
  if (cfg.lambda != 0.0)
    shift = cfg.lambda * (s * p - cfg.p_a) / (1.0 - s);
  return (cfg.p_a + shift) / s;
}

double fll_mean_outcome(const FllBinaryConfig& cfg, double p) {
  const double s = cfg.p_a + cfg.p_n;
  if (s <= 0.0) return p;  // Y = D for compliers
  return p - cfg.p_a + s * fll_noncomplier_rate(cfg, p);
}

Dataset gen_fll_binary(const FllBinaryConfig& cfg, std::uint64_t seed) {
  check_fll(cfg);
  const std::vector<double> pj = fll_judge_propensities(cfg);
  const double s = cfg.p_a + cfg.p_n;
  const double complier_mass = 1.0 - s;
  std::vector<double> rate(static_cast<std::size_t>(cfg.J), 0.0);
  if (s > 0.0)
    for (int j = 0; j < cfg.J; ++j)
      rate[static_cast<std::size_t>(j)] =
          fll_noncomplier_rate(cfg, pj[static_cast<std::size_t>(j)]);

  const std::size_t n = static_cast<std::size_t>(cfg.n);
  Dataset ds;
  ds.y.resize(n);
  ds.d.resize(n);
  ds.z_names = {"judge"};
  ds.z.assign(1, std::vector<double>(n));

  /* contiguous blocks of n/J cases per judge, remainder to the first judges */
  const std::size_t base = n / static_cast<std::size_t>(cfg.J);
  const std::size_t rem = n % static_cast<std::size_t>(cfg.J);

  const rng::Stream st{seed};
  std::size_t i = 0;
  for (int j = 0; j < cfg.J; ++j) {
    const std::size_t nj = base + (static_cast<std::size_t>(j) < rem ? 1 : 0);
    const double thresh =
        complier_mass > 0.0
            ? (pj[static_cast<std::size_t>(j)] - cfg.p_a) / complier_mass
            : 0.0;
    for (std::size_t t = 0; t < nj; ++t, ++i) {
      const double u_type = rng::u01(st.raw(i, 1));
      std::int8_t d;
      double y;
      if (u_type < cfg.p_a) {  // always treated
        d = 1;
        y = rng::u01(st.raw(i, 3)) < rate[static_cast<std::size_t>(j)] ? 1.0
                                                                       : 0.0;
      } else if (u_type >= 1.0 - cfg.p_n) {  // never treated
        d = 0;
        y = rng::u01(st.raw(i, 3)) < rate[static_cast<std::size_t>(j)] ? 1.0
                                                                       : 0.0;
      } else {  // complier: treated below the judge-specific cost threshold
        d = rng::u01(st.raw(i, 2)) <= thresh ? 1 : 0;
        y = static_cast<double>(d);
      }
      ds.d[i] = d;
      ds.y[i] = y;
      ds.z[0][i] = static_cast<double>(j + 1);
    }
  }
  return ds;
}

namespace {

void check_gauss(const GaussianContinuousConfig& cfg) {
  if (cfg.L < 3)
    fail(ErrorKind::Config,
         "need at least two judges (L >= 3), got L = " +
             std::to_string(cfg.L));
  if (cfg.n < 1) fail(ErrorKind::Config, "need at least one case");
  if (cfg.equal_judge_counts) {
    if (cfg.delta1 != 0.0)
      fail(ErrorKind::Config,
           "equal judge counts require delta1 = 0; otherwise judge "
           "membership is informative about the latent errors");
    if (cfg.n % (cfg.L - 1) != 0)
      fail(ErrorKind::Config,
           "equal judge counts require n divisible by L-1");
  }
}

}  // namespace

GaussianLatents gen_gaussian_with_latents(const GaussianContinuousConfig& cfg,
                                          std::uint64_t seed) {
  check_gauss(cfg);
  const double d1 = cfg.delta1;
  Eigen::Matrix4d sigma;  // order (U0, U1, U, Z*)
  sigma << 1.0, 0.0, -0.5, d1,
           0.0, 1.0, 0.5, d1,
          -0.5, 0.5, 1.0, 0.0,
           d1, d1, 0.0, 1.0;
  Eigen::LLT<Eigen::Matrix4d> llt(sigma);
  if (llt.info() != Eigen::Success)
    fail(ErrorKind::Config,
         "latent covariance is not positive definite at delta1 = " +
             std::to_string(d1) + "; |delta1| must stay below sqrt(1/2)");
  const Eigen::Matrix4d a = llt.matrixL();

  const int J = cfg.L - 1;
  std::vector<double> zlev(static_cast<std::size_t>(J + 1), 0.0);
  for (int l = 1; l <= J; ++l)
    zlev[static_cast<std::size_t>(l)] =
        rng::normal_quantile(static_cast<double>(l) / cfg.L);

  const std::size_t n = static_cast<std::size_t>(cfg.n);
  const bool with_x = cfg.beta1 != 0.0 || cfg.beta0 != 0.0;

  GaussianLatents out;
  out.data.y.resize(n);
  out.data.d.resize(n);
  out.data.z_names = {"judge"};
  out.data.z.assign(1, std::vector<double>(n));
  if (with_x) {
    out.data.x_names = {"x"};
    out.data.x.assign(1, std::vector<double>(n));
  }
  out.u0.resize(n);
  out.u1.resize(n);
  out.u.resize(n);
  out.zstar.resize(n);
  out.y1.resize(n);
  out.y0.resize(n);

  const rng::Stream s0{rng::key2(seed, 1)};
  const rng::Stream s1{rng::key2(seed, 2)};
  const rng::Stream s2{rng::key2(seed, 3)};
  const rng::Stream s3{rng::key2(seed, 4)};
  const rng::Stream sx{rng::key2(seed, 5)};

  const std::size_t per_judge =
      cfg.equal_judge_counts ? n / static_cast<std::size_t>(J) : 0;

  for (std::size_t i = 0; i < n; ++i) {
    const double g0 = s0.normal(i);
    const double g1 = s1.normal(i);
    const double g2 = s2.normal(i);
    const double g3 = s3.normal(i);
    const double u0 = a(0, 0) * g0;
    const double u1 = a(1, 0) * g0 + a(1, 1) * g1;
    const double u = a(2, 0) * g0 + a(2, 1) * g1 + a(2, 2) * g2;
    const double zs =
        a(3, 0) * g0 + a(3, 1) * g1 + a(3, 2) * g2 + a(3, 3) * g3;

    int level;
    if (cfg.equal_judge_counts) {
      level = 1 + static_cast<int>(i / per_judge);
    } else {
      const double cell = rng::normal_cdf(zs) * cfg.L;
      level = static_cast<int>(std::llround(cell));
      level = std::clamp(level, 1, J);
    }
    const double z = zlev[static_cast<std::size_t>(level)];

    std::int8_t d;
    if (cfg.delta2 == 0.0) {
      d = z > u ? 1 : 0;
    } else {
      /* two judge groups with opposite rankings */
      d = u >= u0 ? (z > u ? 1 : 0) : (1.0 - z > u ? 1 : 0);
    }

    const double x = sx.normal(i);
    const double y1 = 1.0 + x * cfg.beta1 + cfg.delta3 * z + u1;
    const double y0 = x * cfg.beta0 + cfg.delta3 * z + u0;

    out.data.z[0][i] = z;
    out.data.d[i] = d;
    out.data.y[i] = d == 1 ? y1 : y0;
    if (with_x) out.data.x[0][i] = x;
    out.u0[i] = u0;
    out.u1[i] = u1;
    out.u[i] = u;
    out.zstar[i] = zs;
    out.y1[i] = y1;
    out.y0[i] = y0;
  }
  return out;
}

Dataset gen_gaussian_continuous(const GaussianContinuousConfig& cfg,
                                std::uint64_t seed) {
  return std::move(gen_gaussian_with_latents(cfg, seed).data);
}

namespace {

void check_example1_point(double p) {
  if (!(p > 0.0 && p < 1.0))
    fail(ErrorKind::Validation,
         "treated share must lie strictly inside (0,1), got " +
             std::to_string(p));
}

}  // namespace

double example1_eyd(double p) {
  check_example1_point(p);
  return p < 0.5 ? p : p * p;
}

double example1_ey1md(double p) {
  check_example1_point(p);
  return p < 0.5 ? 0.0 : p * (1.0 - p);
}

Example1Slopes example1_oracle(double p, double p_prime) {
  check_example1_point(p);
  check_example1_point(p_prime);
  if (p == p_prime)
    fail(ErrorKind::Validation,
         "slope needs two distinct treated shares, both are " +
             std::to_string(p));
  const double dp = p_prime - p;
  Example1Slopes s;
  s.w_yd = (example1_eyd(p_prime) - example1_eyd(p)) / dp;
  s.w_y1md = (example1_ey1md(p_prime) - example1_ey1md(p)) / dp;
  const double ey_hi = example1_eyd(p_prime) + example1_ey1md(p_prime);
  const double ey_lo = example1_eyd(p) + example1_ey1md(p);
  s.w_y = (ey_hi - ey_lo) / dp;
  return s;
}

SimReport run_monte_carlo(const McConfig& cfg) {
  if (cfg.reps < 1)
    fail(ErrorKind::Config, "need at least one replication");
  if (cfg.dgp == DgpKind::FllBinary)
    check_fll(cfg.fll);
  else
    check_gauss(cfg.gaussian);

  SimReport report;
  report.reps = cfg.reps;
  report.seed = cfg.seed;
  report.decisions.assign(static_cast<std::size_t>(cfg.reps), -1);

  std::mutex mu;
  std::vector<RepFailure> failures;
  WidthCache width_cache;
  /* The exact test's only randomness is the data-independent width
   * simulation, so all replications share one width seed and the cache turns
   * repeated count pairs into lookups.  The sharp test's bootstrap weights
   * are data-facing inference noise and get a fresh seed per replication. */
  const std::uint64_t finite_seed = rng::key2(cfg.seed, kSaltTest);

  parallel_for(static_cast<std::size_t>(cfg.reps), cfg.threads,
               [&](std::size_t r) {
    const std::uint64_t rep_seed = rng::key3(cfg.seed, kSaltRep, r);
    try {
      Dataset data = cfg.dgp == DgpKind::FllBinary
                         ? gen_fll_binary(cfg.fll, rep_seed)
                         : gen_gaussian_continuous(cfg.gaussian, rep_seed);
      bool reject = false;
      if (cfg.test == TestKind::Sharp) {
        SharpConfig sc = cfg.sharp;
        sc.seed = rng::key3(rep_seed, kSaltTest, 0);
        sc.threads = 1;
        reject = data.kx() > 0 ? run_adjusted_sharp_test(data, sc).test.reject
                               : run_sharp_test(data, sc).reject;
      } else {
        if (!is_binary01(data.y))
          for (double& v : data.y) v = v >= cfg.binarize ? 1.0 : 0.0;
        FiniteConfig fc = cfg.finite;
        fc.seed = finite_seed;
        fc.threads = 1;
        reject = run_finite_sample_test(data, fc, &width_cache).reject;
      }
      report.decisions[r] = reject ? 1 : 0;
    } catch (const Error& e) {
      std::lock_guard<std::mutex> lock(mu);
      failures.push_back(
          {static_cast<int>(r), std::string(e.kind_name()), e.what()});
    }
  });

  std::sort(failures.begin(), failures.end(),
            [](const RepFailure& a, const RepFailure& b) {
              return a.rep < b.rep;
            });
  report.failures = std::move(failures);
  for (std::int8_t v : report.decisions) {
    if (v < 0) continue;
    ++report.completed;
    report.rejections += v;
  }
  report.rejection_rate =
      report.completed > 0
          ? static_cast<double>(report.rejections) / report.completed
          : 0.0;
  return report;
}

}  // namespace sharpiv
