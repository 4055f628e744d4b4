#include "sharpiv/rng.hpp"

#include "sharpiv/errors.hpp"

namespace sharpiv::rng {

/* Inverse standard normal CDF.
 *
 * Abramowitz-Stegun 26.2.23 tail seed (|error| < 4.5e-4) followed by Halley
 * iterations on Phi(x) - p; three steps take the seed to full double
 * precision everywhere the density is representable.  Not used in sampling
 * hot paths (those use Box-Muller); this serves quantile grids and tests.
 */
double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    fail(ErrorKind::Config, "normal_quantile: p must lie strictly in (0,1)");
  const bool lower = p < 0.5;
  const double pt = lower ? p : 1.0 - p;
  const double t = std::sqrt(-2.0 * std::log(pt));
  double x = t - (2.30753 + 0.27061 * t) /
                     (1.0 + t * (0.99229 + 0.04481 * t));
  x = -x;  // seed for the lower tail
  for (int it = 0; it < 3; ++it) {
    const double f = normal_cdf(x) - pt;
    const double d = normal_pdf(x);
    if (d <= 0.0) break;
    const double u = f / d;
    x -= u / (1.0 + 0.5 * x * u);  // Halley step, f'' = -x f'
  }
  return lower ? x : -x;
}

}  // namespace sharpiv::rng
