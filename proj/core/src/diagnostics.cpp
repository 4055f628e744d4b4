#include "sharpiv/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "sharpiv/errors.hpp"

namespace sharpiv {

namespace {

struct Cell {
  double p = 0.0;
  double sum_y = 0.0;    // running sums of g(y), g(y)d, g(y)(1-d)
  double sum_yd = 0.0;
  double sum_y1md = 0.0;
  std::int64_t n = 0;
};

void check_fit(const Dataset& ds, const PropensityFit& fit) {
  if (fit.p_hat.size() != ds.n()) {
    fail(ErrorKind::Config,
         "propensity fit covers " + std::to_string(fit.p_hat.size()) +
             " cases but the dataset has " + std::to_string(ds.n()));
  }
}

void accumulate(Cell& c, double gy, std::int8_t d) {
  c.sum_y += gy;
  if (d == 1) {
    c.sum_yd += gy;
  } else {
    c.sum_y1md += gy;
  }
  ++c.n;
}

/* Cells of the fitted propensity: one per distinct value for frequency fits,
 * quantile buckets otherwise.  Returned ascending in p with p the within-cell
 * mean of p_hat (which is the exact support value in the discrete case). */
std::vector<Cell> propensity_cells(const Dataset& ds, const PropensityFit& fit,
                                   const GFunc& g, int bins, bool* binned) {
  validate(ds);
  check_fit(ds, fit);
  if (bins < 1) fail(ErrorKind::Config, "bins must be at least 1");

  std::vector<Cell> cells;
  if (fit.method == PscoreMethod::Frequency) {
    if (binned != nullptr) *binned = false;
    std::map<double, Cell> by_p;
    for (std::size_t i = 0; i < ds.n(); ++i) {
      accumulate(by_p[fit.p_hat[i]], g(ds.y[i]), ds.d[i]);
    }
    cells.reserve(by_p.size());
    for (auto& [p, c] : by_p) {
      c.p = p;
      cells.push_back(c);
    }
  } else {
    if (binned != nullptr) *binned = true;
    std::vector<double> sorted = fit.p_hat;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    /* Interior nearest-rank quantile cuts; value v lands in the first bucket
     * whose cut is >= v, so buckets are (cut[t-1], cut[t]] slices.  Cuts
     * equal to the maximum are dropped so the last bucket cannot be empty. */
    std::vector<double> cuts;
    for (int t = 1; t < bins; ++t) {
      const std::size_t idx =
          static_cast<std::size_t>(t) * (n - 1) / static_cast<std::size_t>(bins);
      const double cut = sorted[idx];
      if (cut < sorted[n - 1] && (cuts.empty() || cut > cuts.back())) {
        cuts.push_back(cut);
      }
    }
    std::vector<Cell> buckets(cuts.size() + 1);
    std::vector<double> psum(buckets.size(), 0.0);
    for (std::size_t i = 0; i < ds.n(); ++i) {
      const double v = fit.p_hat[i];
      const std::size_t t = static_cast<std::size_t>(
          std::lower_bound(cuts.begin(), cuts.end(), v) - cuts.begin());
      accumulate(buckets[t], g(ds.y[i]), ds.d[i]);
      psum[t] += v;
    }
    for (std::size_t t = 0; t < buckets.size(); ++t) {
      if (buckets[t].n == 0) {
        fail(ErrorKind::Validation,
             "empty propensity cell " + std::to_string(t));
      }
      buckets[t].p = psum[t] / static_cast<double>(buckets[t].n);
    }
    cells = std::move(buckets);
  }
  return cells;
}

}  // namespace

MomentCurve moment_curves(const Dataset& ds, const PropensityFit& fit,
                          const GFunc& g, int bins) {
  MomentCurve curve;
  const std::vector<Cell> cells =
      propensity_cells(ds, fit, g, bins, &curve.binned);
  curve.points.reserve(cells.size());
  for (const Cell& c : cells) {
    CurvePoint pt;
    pt.p = c.p;
    pt.m1 = c.sum_yd / static_cast<double>(c.n);
    pt.m0_neg = -c.sum_y1md / static_cast<double>(c.n);
    pt.n_cell = c.n;
    curve.points.push_back(pt);
  }
  return curve;
}

std::vector<SlopeRow> slope_bounds(const Dataset& ds, const PropensityFit& fit,
                                   const GFunc& g, const SlopeOptions& opt) {
  if (!(opt.g_lo <= opt.g_hi)) {
    fail(ErrorKind::Config, "g_lo must not exceed g_hi");
  }
  if (std::isnan(opt.k) || opt.k < 0.0) {
    fail(ErrorKind::Config, "k must be a nonnegative slope bound");
  }
  double lo = 0.0, hi = 0.0;
  switch (opt.variant) {
    case SlopeVariant::Y:
      lo = -opt.k;
      hi = opt.k;
      break;
    case SlopeVariant::YD:
      lo = opt.g_lo;
      hi = opt.g_hi;
      break;
    case SlopeVariant::Y1mD:
      lo = -opt.g_hi;
      hi = -opt.g_lo;
      break;
  }

  const std::vector<Cell> cells =
      propensity_cells(ds, fit, g, opt.bins, nullptr);
  std::vector<SlopeRow> rows;
  rows.reserve(cells.size() * (cells.size() - 1) / 2);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (std::size_t j = i + 1; j < cells.size(); ++j) {
      SlopeRow row;
      row.p_lo = cells[i].p;
      row.p_hi = cells[j].p;
      row.bound_lo = lo;
      row.bound_hi = hi;
      if (cells[i].p == cells[j].p) {
        row.skipped = true;
        row.note = "coincident propensities";
        rows.push_back(row);
        continue;
      }
      double num = 0.0;
      switch (opt.variant) {
        case SlopeVariant::Y:
          num = cells[j].sum_y / static_cast<double>(cells[j].n) -
                cells[i].sum_y / static_cast<double>(cells[i].n);
          break;
        case SlopeVariant::YD:
          num = cells[j].sum_yd / static_cast<double>(cells[j].n) -
                cells[i].sum_yd / static_cast<double>(cells[i].n);
          break;
        case SlopeVariant::Y1mD:
          num = cells[j].sum_y1md / static_cast<double>(cells[j].n) -
                cells[i].sum_y1md / static_cast<double>(cells[i].n);
          break;
      }
      row.slope = num / (cells[j].p - cells[i].p);
      row.violated = row.slope < lo || row.slope > hi;
      rows.push_back(row);
    }
  }
  return rows;
}

WaldCheck wald_bound_check(const Dataset& ds, const PropensityFit& fit,
                           double u, double l) {
  validate(ds);
  check_fit(ds, fit);
  if (!(l <= u)) fail(ErrorKind::Config, "outcome bounds must satisfy l <= u");
  const double n = static_cast<double>(ds.n());
  double ybar = 0.0, dbar = 0.0, pbar = 0.0;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    ybar += ds.y[i];
    dbar += ds.d[i];
    pbar += fit.p_hat[i];
  }
  ybar /= n;
  dbar /= n;
  pbar /= n;
  double cov_yp = 0.0, cov_dp = 0.0;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    const double dp = fit.p_hat[i] - pbar;
    cov_yp += (ds.y[i] - ybar) * dp;
    cov_dp += (ds.d[i] - dbar) * dp;
  }
  if (cov_dp == 0.0) {
    fail(ErrorKind::Numerics,
         "the fitted propensity does not covary with the decision; the Wald "
         "ratio is undefined (irrelevant instrument)");
  }
  WaldCheck out;
  out.wald = cov_yp / cov_dp;
  out.bound = u - l;
  out.within = std::abs(out.wald) <= out.bound;
  return out;
}

double conditional_wald(const Dataset& ds, const PropensityFit& fit, double p,
                        double p_prime, const GFunc& g) {
  validate(ds);
  check_fit(ds, fit);
  if (p == p_prime) {
    fail(ErrorKind::Validation,
         "conditional Wald needs two distinct propensity values, got " +
             format_double(p) + " twice");
  }
  double s0 = 0.0, s1 = 0.0;
  std::int64_t n0 = 0, n1 = 0;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    if (fit.p_hat[i] == p) {
      s0 += g(ds.y[i]);
      ++n0;
    } else if (fit.p_hat[i] == p_prime) {
      s1 += g(ds.y[i]);
      ++n1;
    }
  }
  if (n0 == 0) {
    fail(ErrorKind::Validation,
         "no cases with fitted propensity " + format_double(p));
  }
  if (n1 == 0) {
    fail(ErrorKind::Validation,
         "no cases with fitted propensity " + format_double(p_prime));
  }
  return (s1 / static_cast<double>(n1) - s0 / static_cast<double>(n0)) /
         (p_prime - p);
}

std::string curve_csv(const MomentCurve& curve) {
  std::ostringstream out;
  out << "p,m1,m0_neg,n_cell\n";
  for (const CurvePoint& pt : curve.points) {
    out << format_double(pt.p) << ',' << format_double(pt.m1) << ','
        << format_double(pt.m0_neg) << ',' << pt.n_cell << '\n';
  }
  return out.str();
}

std::string slopes_csv(const std::vector<SlopeRow>& rows) {
  std::ostringstream out;
  out << "p_lo,p_hi,slope,bound_lo,bound_hi,violated,note\n";
  for (const SlopeRow& r : rows) {
    out << format_double(r.p_lo) << ',' << format_double(r.p_hi) << ',';
    if (r.skipped) {
      out << ",,,";
    } else {
      out << format_double(r.slope) << ',' << format_double(r.bound_lo) << ','
          << format_double(r.bound_hi) << ',' << (r.violated ? 1 : 0);
    }
    out << ',' << r.note << '\n';
  }
  return out.str();
}

}  // namespace sharpiv
