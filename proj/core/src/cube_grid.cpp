#include "sharpiv/cube_grid.hpp"

#include "sharpiv/errors.hpp"

namespace sharpiv {

CubeGrid build_grid(int QY, int QP) {
  if (QY < 1) fail(ErrorKind::Config, "outcome refinement QY must be >= 1");
  if (QP < 2) fail(ErrorKind::Config, "propensity refinement QP must be >= 2");
  CubeGrid grid;
  grid.QY = QY;
  grid.QP = QP;
  std::size_t count = 0;
  {
    std::size_t sy = 0, sp = 0;
    for (int q = 1; q <= QY; ++q) sy += static_cast<std::size_t>(q);
    for (int q = 2; q <= QP; ++q)
      sp += static_cast<std::size_t>(q) * static_cast<std::size_t>(q - 1) / 2;
    count = sy * sp;
  }
  grid.cubes.reserve(count);

  for (int qy = 1; qy <= QY; ++qy) {
    const double ry = 1.0 / qy;
    const double wy = ry * ry * ry;  // qy^-3
    for (int ky = 0; ky < qy; ++ky) {
      for (int qp = 2; qp <= QP; ++qp) {
        const double rp = 1.0 / qp;
        const double omega =
            wy * rp * rp / (static_cast<double>(qp) * (qp - 1));
        for (int kp2 = 0; kp2 < qp; ++kp2) {
          for (int kp1 = kp2 + 1; kp1 < qp; ++kp1) {
            CubeIndex c;
            c.qy = qy;
            c.ky = ky;
            c.qp = qp;
            c.kp1 = kp1;
            c.kp2 = kp2;
            c.y = static_cast<double>(ky) / qy;
            c.y_hi = static_cast<double>(ky + 1) / qy;
            c.ry = ry;
            c.p1 = static_cast<double>(kp1) / qp;
            c.p1_hi = static_cast<double>(kp1 + 1) / qp;
            c.p2 = static_cast<double>(kp2) / qp;
            c.p2_hi = static_cast<double>(kp2 + 1) / qp;
            c.rp = rp;
            c.omega = omega;
            grid.total_weight += omega;
            grid.cubes.push_back(c);
          }
        }
      }
    }
  }
  return grid;
}

}  // namespace sharpiv
