#pragma once

#include <cstddef>
#include <vector>

namespace sharpiv {

/* One testable restriction: outcome cell [y, y+ry] at dyadic-free level qy
 * crossed with an ordered propensity cell pair p1 > p2 at level qp.  Closed
 * intervals on both ends; integer indices are authoritative, the doubles are
 * the exact endpoints used in membership checks and reports. */
struct CubeIndex {
  int qy = 1, ky = 0;
  int qp = 2, kp1 = 1, kp2 = 0;
  double y = 0.0, ry = 1.0, y_hi = 1.0;
  double p1 = 0.5, p2 = 0.0, rp = 0.5;
  double p1_hi = 1.0, p2_hi = 0.5;
  double omega = 0.0;  // qy^-3 * qp^-2 / (qp (qp-1))
};

struct CubeGrid {
  int QY = 0, QP = 0;
  std::vector<CubeIndex> cubes;
  double total_weight = 0.0;

  std::size_t size() const { return cubes.size(); }
};

/* All cubes for outcome levels 1..QY and propensity levels 2..QP, enumerated
 * lexicographically in (qy, y, qp, p2, p1) with p1 > p2 strictly.  The count
 * is (sum_{q<=QY} q) * (sum_{2<=q<=QP} q(q-1)/2). */
CubeGrid build_grid(int QY, int QP);

/* closed-interval membership: left <= v <= left + width */
inline bool cube_membership(double v, double left, double width) {
  return left <= v && v <= left + width;
}

}  // namespace sharpiv
