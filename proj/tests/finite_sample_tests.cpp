#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "sharpiv/dataset.hpp"
#include "sharpiv/errors.hpp"
#include "sharpiv/finite_sample.hpp"
#include "test_util.hpp"

using namespace sharpiv;
using testutil::JudgeBlock;
using testutil::expect_error;
using testutil::make_blocks;

namespace {

/* ---------------------------------------------------------------------------
 * Enumeration oracle for the equal-count width.
 *
 * For tiny per-judge counts the difference of two Bernoulli(1/2) sample means
 * has an exactly computable distribution: every probability is a dyadic
 * rational with denominator 4^n <= 64, so double arithmetic below is exact
 * and the smallest admissible grid point can be found without simulation.
 * ------------------------------------------------------------------------- */

std::vector<double> half_binomial_pmf(std::int64_t n) {
  std::vector<double> c(static_cast<std::size_t>(n) + 1, 0.0);
  c[0] = 1.0;
  for (std::int64_t row = 1; row <= n; ++row)
    for (std::int64_t k = row; k >= 1; --k) c[k] += c[k - 1];
  const double scale = std::ldexp(1.0, static_cast<int>(-n));
  for (double& v : c) v *= scale;
  return c;
}

double enumerated_width(std::int64_t n, double level) {
  const std::vector<double> pmf = half_binomial_pmf(n);
  for (std::int64_t j = -n; j <= n; ++j) {
    double tail = 0.0;
    for (std::int64_t k1 = 0; k1 <= n; ++k1)
      for (std::int64_t k2 = 0; k2 <= n; ++k2)
        if (k1 - k2 > j)
          tail += pmf[static_cast<std::size_t>(k1)] *
                  pmf[static_cast<std::size_t>(k2)];
    if (tail <= level) return static_cast<double>(j) / static_cast<double>(n);
  }
  return 2.0;  // unreachable: the tail above the top grid point is zero
}

JudgeSummary summary(double judge, std::int64_t n, double p, double q1,
                     double q0) {
  JudgeSummary s;
  s.judge = judge;
  s.n = n;
  s.p_hat = p;
  s.q1_hat = q1;
  s.q0_hat = q0;
  return s;
}

}  // namespace

TEST_CASE("enumerated equal-count widths take their closed-form values") {
  CHECK(enumerated_width(1, 0.3) == 0.0);
  CHECK(enumerated_width(1, 0.05) == 1.0);
  CHECK(enumerated_width(1, 0.0125) == 1.0);
  CHECK(enumerated_width(2, 0.3) == 0.5);
  CHECK(enumerated_width(2, 0.05) == 1.0);
  CHECK(enumerated_width(2, 0.0125) == 1.0);
  CHECK(enumerated_width(3, 0.3) == 1.0 / 3.0);
  CHECK(enumerated_width(3, 0.05) == 2.0 / 3.0);
  CHECK(enumerated_width(3, 0.0125) == 1.0);
}

TEST_CASE("simulated equal-count widths agree with the enumeration") {
  /* at a million draws every decision margin in this table is dozens of
   * standard errors wide, so the match is exact for any seed */
  for (const std::uint64_t seed : {0ull, 12345ull}) {
    for (const std::int64_t n : {1, 2, 3}) {
      for (const double level : {0.3, 0.05, 0.0125}) {
        CHECK(fs_critical_width(n, level, 1'000'000, seed) ==
              enumerated_width(n, level));
      }
    }
  }
}

TEST_CASE("unequal-count widths hit their frozen grid points") {
  for (const std::uint64_t seed : {11ull, 222ull}) {
    CHECK(fs_critical_width(2, 4, 0.3, 1'000'000, seed) == 0.25);
    CHECK(fs_critical_width(2, 4, 0.05, 1'000'000, seed) == 0.75);
    CHECK(fs_critical_width(2, 4, 0.0125, 1'000'000, seed) == 1.0);
    /* fifths are not dyadic: compare against the same expression the
     * simulation evaluates, k1/n_j - k2/n_jp */
    CHECK(fs_critical_width(3, 5, 0.05, 1'000'000, seed) == 1.0 - 2.0 / 5.0);
    CHECK(fs_critical_width(3, 5, 0.0125, 1'000'000, seed) == 1.0 - 1.0 / 5.0);
  }
}

TEST_CASE("equal counts route both width overloads to the same draw") {
  for (const std::int64_t n : {1, 4, 70})
    CHECK(fs_critical_width(n, n, 0.05, 20'000, 9) ==
          fs_critical_width(n, 0.05, 20'000, 9));
}

TEST_CASE("widths shrink with the count and grow as the tail tightens") {
  const double w4 = fs_critical_width(4, 0.05, 1'000'000, 3);
  const double w64 = fs_critical_width(64, 0.05, 1'000'000, 3);
  const double w1024 = fs_critical_width(1024, 0.05, 1'000'000, 3);
  CHECK(w4 >= w64);
  CHECK(w64 >= w1024);
  CHECK(w1024 > 0.0);

  /* same seed means same draws, so the budget ordering is structural */
  const double loose = fs_critical_width(7, 0.3, 100'000, 5);
  const double mid = fs_critical_width(7, 0.05, 100'000, 5);
  const double tight = fs_critical_width(7, 0.0125, 100'000, 5);
  CHECK(loose <= mid);
  CHECK(mid <= tight);
}

TEST_CASE("width simulation rejects bad arguments") {
  expect_error(ErrorKind::Config, [] { fs_critical_width(0, 0.05, 100, 1); });
  expect_error(ErrorKind::Config,
               [] { fs_critical_width(3, 0, 0.05, 100, 1); });
  expect_error(ErrorKind::Config, [] { fs_critical_width(3, 0.5, 100, 1); });
  expect_error(ErrorKind::Config, [] { fs_critical_width(3, 0.0, 100, 1); });
  expect_error(ErrorKind::Config, [] { fs_critical_width(3, 0.05, 0, 1); });
}

TEST_CASE("pair decisions fire only on certified sign conflicts") {
  /* equal treated shares never reject: neither share interval clears zero */
  const PairDecision tied = fs_pair_test(summary(1, 10, 0.5, 0.5, 0.0),
                                         summary(2, 10, 0.5, 0.0, -0.5),
                                         0.2, 0.2, 0.2);
  CHECK_FALSE(tied.rejected);
  CHECK(tied.events.empty());

  /* share clearly up, treated-outcome mass clearly down */
  const PairDecision up = fs_pair_test(summary(1, 10, 0.95, 0.1, -0.05),
                                       summary(2, 10, 0.05, 0.9, -0.05),
                                       0.2, 0.2, 0.2);
  CHECK(up.delta_p == doctest::Approx(0.9));
  CHECK(up.rejected);
  REQUIRE(up.events.size() == 1);
  CHECK(up.events[0] == "p-up/q1-down");
  CHECK(up.cs_p_lo == doctest::Approx(0.7));
  CHECK(up.cs_q1_hi == doctest::Approx(-0.6));

  /* the mirrored conflict on the untreated arm */
  const PairDecision down = fs_pair_test(summary(1, 10, 0.1, 0.0, -0.05),
                                         summary(2, 10, 0.9, 0.0, -0.8),
                                         0.2, 0.2, 0.2);
  CHECK(down.rejected);
  REQUIRE(down.events.size() == 1);
  CHECK(down.events[0] == "p-down/q0-up");

  /* remaining two event labels */
  CHECK(fs_pair_test(summary(1, 10, 0.1, 0.8, 0.0),
                     summary(2, 10, 0.9, 0.1, 0.0), 0.2, 0.2, 0.2)
            .events[0] == "p-down/q1-up");
  CHECK(fs_pair_test(summary(1, 10, 0.9, 0.0, -0.8),
                     summary(2, 10, 0.1, 0.0, -0.1), 0.2, 0.2, 0.2)
            .events[0] == "p-up/q0-down");

  /* the conflict needs strict clearance: a gap equal to the width is not
   * enough, and a unit width can never certify anything */
  const PairDecision grazing = fs_pair_test(summary(1, 10, 0.7, 0.0, 0.0),
                                            summary(2, 10, 0.3, 1.0, 0.0),
                                            0.4, 0.4, 0.4);
  CHECK_FALSE(grazing.rejected);
  const PairDecision unit = fs_pair_test(summary(1, 10, 1.0, 0.0, 0.0),
                                         summary(2, 10, 0.0, 1.0, -1.0),
                                         1.0, 1.0, 1.0);
  CHECK_FALSE(unit.rejected);
}

TEST_CASE("judge summaries aggregate exactly and sort by instrument value") {
  const Dataset ds = make_blocks({{3.0, 5, 4, 2, 1},
                                  {1.0, 4, 2, 1, 1},
                                  {2.0, 6, 3, 3, 2}});
  FiniteConfig cfg;
  cfg.b_sim = 500;
  cfg.seed = 8;
  cfg.threads = 1;
  const FiniteResult res = run_finite_sample_test(ds, cfg);

  REQUIRE(res.judges.size() == 3);
  CHECK(res.judges[0].judge == 1.0);
  CHECK(res.judges[1].judge == 2.0);
  CHECK(res.judges[2].judge == 3.0);
  CHECK(res.judges[0].n == 4);
  CHECK(res.judges[1].n == 6);
  CHECK(res.judges[2].n == 5);
  CHECK(res.judges[0].p_hat == 0.5);
  CHECK(res.judges[0].q1_hat == 0.25);
  CHECK(res.judges[0].q0_hat == -0.25);
  CHECK(res.judges[1].p_hat == 0.5);
  CHECK(res.judges[1].q1_hat == 0.5);
  CHECK(res.judges[1].q0_hat == doctest::Approx(-2.0 / 6.0));
  CHECK(res.judges[2].p_hat == 0.8);
  CHECK(res.judges[2].q1_hat == 0.4);
  CHECK(res.judges[2].q0_hat == -0.2);
  for (const JudgeSummary& js : res.judges) {
    CHECK(js.q1_hat >= 0.0);
    CHECK(js.q1_hat <= js.p_hat);
    CHECK(js.q0_hat <= 0.0);
    /* the bound itself is evaluated in floats, so allow one rounding step */
    CHECK(js.q0_hat >= -(1.0 - js.p_hat) - 1e-12);
  }

  CHECK(res.n == 15);
  CHECK(res.n_judges == 3);
  CHECK(res.alpha_pair == 2.0 * cfg.alpha / (3.0 * 2.0));
  CHECK(res.alpha_width == res.alpha_pair / 4.0);
  REQUIRE(res.pairs.size() == 3);
  CHECK(res.pairs[0].j == 0);
  CHECK(res.pairs[0].jp == 1);
  CHECK(res.pairs[1].j == 0);
  CHECK(res.pairs[1].jp == 2);
  CHECK(res.pairs[2].j == 1);
  CHECK(res.pairs[2].jp == 2);
  bool any = false;
  for (const PairDecision& d : res.pairs) {
    CHECK(d.c_hat > 0.0);
    CHECK(d.delta_p ==
          res.judges[static_cast<std::size_t>(d.j)].p_hat -
              res.judges[static_cast<std::size_t>(d.jp)].p_hat);
    if (d.rejected) any = true;
  }
  CHECK(res.reject == any);
}

TEST_CASE("relabeling judges moves no width and no decision") {
  const FiniteConfig cfg = [] {
    FiniteConfig c;
    c.b_sim = 2000;
    c.seed = 77;
    c.threads = 1;
    return c;
  }();
  const Dataset a = make_blocks({{1.0, 3, 1, 1, 0},
                                 {2.0, 4, 2, 1, 1},
                                 {3.0, 5, 4, 2, 0}});
  const Dataset b = make_blocks({{30.0, 3, 1, 1, 0},
                                 {20.0, 4, 2, 1, 1},
                                 {10.0, 5, 4, 2, 0}});
  const FiniteResult ra = run_finite_sample_test(a, cfg);
  const FiniteResult rb = run_finite_sample_test(b, cfg);
  CHECK(ra.reject == rb.reject);

  /* widths depend only on the unordered case counts and the seed */
  auto width_by_counts = [](const FiniteResult& r) {
    std::map<std::pair<std::int64_t, std::int64_t>, double> m;
    for (const PairDecision& d : r.pairs)
      m[std::minmax(r.judges[static_cast<std::size_t>(d.j)].n,
                    r.judges[static_cast<std::size_t>(d.jp)].n)] = d.c_hat;
    return m;
  };
  const auto wa = width_by_counts(ra);
  const auto wb = width_by_counts(rb);
  REQUIRE(wa.size() == wb.size());
  for (const auto& [key, w] : wa) {
    REQUIRE(wb.count(key) == 1);
    CHECK(wb.at(key) == w);
  }
}

TEST_CASE("a clear sign reversal rejects; monotone data does not") {
  /* shares 0.6 vs 0.4 while the treated-outcome mass runs 0 vs 0.4: at 200
   * cases per judge the simulated width sits near 0.11, far from both gaps */
  const Dataset bad = make_blocks({{1.0, 200, 120, 0, 0},
                                   {2.0, 200, 80, 80, 0}});
  FiniteConfig cfg;
  cfg.b_sim = 100'000;
  cfg.seed = 19;
  cfg.threads = 1;
  const FiniteResult rbad = run_finite_sample_test(bad, cfg);
  CHECK(rbad.reject);
  REQUIRE(rbad.pairs.size() == 1);
  REQUIRE(rbad.pairs[0].events.size() == 1);
  CHECK(rbad.pairs[0].events[0] == "p-up/q1-down");
  CHECK(rbad.pairs[0].c_hat > 0.05);
  CHECK(rbad.pairs[0].c_hat < 0.2);

  /* same shares, outcome mass rising with the share: no conflict exists at
   * any width */
  const Dataset fine = make_blocks({{1.0, 200, 80, 40, 40},
                                    {2.0, 200, 120, 60, 16}});
  const FiniteResult rfine = run_finite_sample_test(fine, cfg);
  CHECK_FALSE(rfine.reject);
  for (const PairDecision& d : rfine.pairs) CHECK(d.events.empty());
}

TEST_CASE("width cache is honored before simulating and filled after") {
  const Dataset ds = make_blocks({{1.0, 4, 2, 1, 1}, {2.0, 4, 3, 1, 0}});
  FiniteConfig cfg;
  cfg.b_sim = 5000;
  cfg.seed = 31;
  cfg.threads = 1;

  WidthCache planted;
  planted.widths[{4, 4}] = 0.123;
  const FiniteResult forced = run_finite_sample_test(ds, cfg, &planted);
  REQUIRE(forced.pairs.size() == 1);
  CHECK(forced.pairs[0].c_hat == 0.123);

  WidthCache fresh;
  const FiniteResult simulated = run_finite_sample_test(ds, cfg, &fresh);
  REQUIRE(fresh.widths.size() == 1);
  CHECK(fresh.widths.count({4, 4}) == 1);
  CHECK(fresh.widths.at({4, 4}) == simulated.pairs[0].c_hat);

  /* cache off, cache empty, and cache warm all report the same width */
  const FiniteResult off = run_finite_sample_test(ds, cfg);
  CHECK(off.pairs[0].c_hat == simulated.pairs[0].c_hat);
  const FiniteResult warm = run_finite_sample_test(ds, cfg, &fresh);
  CHECK(warm.pairs[0].c_hat == simulated.pairs[0].c_hat);
}

TEST_CASE("pairwise test rejects unusable inputs") {
  FiniteConfig cfg;
  cfg.b_sim = 100;
  cfg.threads = 1;

  Dataset cont = make_blocks({{1.0, 4, 2, 1, 1}, {2.0, 4, 2, 1, 1}});
  cont.y[0] = 0.5;
  const std::string ymsg = expect_error(
      ErrorKind::Validation, [&] { run_finite_sample_test(cont, cfg); });
  CHECK(ymsg.find("binary") != std::string::npos);

  Dataset two_z = make_blocks({{1.0, 4, 2, 1, 1}, {2.0, 4, 2, 1, 1}});
  two_z.z_names.push_back("z2");
  two_z.z.push_back(std::vector<double>(two_z.n(), 1.0));
  expect_error(ErrorKind::Config,
               [&] { run_finite_sample_test(two_z, cfg); });

  Dataset with_x = make_blocks({{1.0, 4, 2, 1, 1}, {2.0, 4, 2, 1, 1}});
  with_x.x_names = {"x"};
  with_x.x = {std::vector<double>(with_x.n(), 0.0)};
  expect_error(ErrorKind::Config,
               [&] { run_finite_sample_test(with_x, cfg); });

  const Dataset lone = make_blocks({{1.0, 8, 4, 2, 2}});
  const std::string jmsg = expect_error(
      ErrorKind::Validation, [&] { run_finite_sample_test(lone, cfg); });
  CHECK(jmsg.find("two judges") != std::string::npos);

  const Dataset ok = make_blocks({{1.0, 4, 2, 1, 1}, {2.0, 4, 2, 1, 1}});
  FiniteConfig bad_alpha = cfg;
  bad_alpha.alpha = 0.0;
  expect_error(ErrorKind::Config,
               [&] { run_finite_sample_test(ok, bad_alpha); });
  FiniteConfig bad_sim = cfg;
  bad_sim.b_sim = 0;
  expect_error(ErrorKind::Config,
               [&] { run_finite_sample_test(ok, bad_sim); });
}

TEST_CASE("thread count does not change the pairwise report") {
  const Dataset ds = make_blocks({{1.0, 6, 3, 2, 1},
                                  {2.0, 9, 4, 2, 2},
                                  {3.0, 7, 5, 3, 1}});
  FiniteConfig cfg;
  cfg.b_sim = 20'000;
  cfg.seed = 55;
  cfg.threads = 1;
  const FiniteResult a = run_finite_sample_test(ds, cfg);
  cfg.threads = 4;
  const FiniteResult b = run_finite_sample_test(ds, cfg);
  CHECK(a.reject == b.reject);
  REQUIRE(a.pairs.size() == b.pairs.size());
  for (std::size_t i = 0; i < a.pairs.size(); ++i) {
    CHECK(a.pairs[i].c_hat == b.pairs[i].c_hat);
    CHECK(a.pairs[i].rejected == b.pairs[i].rejected);
  }
}
