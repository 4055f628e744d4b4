#include <doctest.h>

#include <cmath>
#include <set>
#include <tuple>

#include "sharpiv/cube_grid.hpp"

using sharpiv::CubeGrid;
using sharpiv::CubeIndex;
using sharpiv::build_grid;
using sharpiv::cube_membership;

namespace {

std::size_t expected_count(int QY, int QP) {
  std::size_t y_cells = 0;
  for (int q = 1; q <= QY; ++q) y_cells += static_cast<std::size_t>(q);
  std::size_t p_pairs = 0;
  for (int q = 2; q <= QP; ++q)
    p_pairs += static_cast<std::size_t>(q) * (q - 1) / 2;
  return y_cells * p_pairs;
}

}  // namespace

TEST_CASE("grid size matches the closed-form count") {
  CHECK(build_grid(5, 5).size() == expected_count(5, 5));
  CHECK(build_grid(5, 5).size() == 300);
  CHECK(build_grid(2, 5).size() == 60);
  CHECK(build_grid(1, 2).size() == 1);
  CHECK(build_grid(3, 3).size() == expected_count(3, 3));
}

TEST_CASE("indices, endpoints, and weights are consistent") {
  const CubeGrid grid = build_grid(4, 5);
  for (const CubeIndex& c : grid.cubes) {
    CHECK(c.qy >= 1);
    CHECK(c.qy <= 4);
    CHECK(c.ky >= 0);
    CHECK(c.ky < c.qy);
    CHECK(c.qp >= 2);
    CHECK(c.qp <= 5);
    CHECK(c.kp1 > c.kp2);  // first propensity cell sits strictly higher
    CHECK(c.kp2 >= 0);
    CHECK(c.kp1 < c.qp);

    /* endpoints are the exact index ratios, not accumulated sums */
    CHECK(c.y == static_cast<double>(c.ky) / c.qy);
    CHECK(c.ry == 1.0 / c.qy);
    CHECK(c.y_hi == static_cast<double>(c.ky + 1) / c.qy);
    CHECK(c.p1 == static_cast<double>(c.kp1) / c.qp);
    CHECK(c.p2 == static_cast<double>(c.kp2) / c.qp);
    CHECK(c.rp == 1.0 / c.qp);
    CHECK(c.p1_hi == static_cast<double>(c.kp1 + 1) / c.qp);
    CHECK(c.p2_hi == static_cast<double>(c.kp2 + 1) / c.qp);

    const double qy = c.qy, qp = c.qp;
    CHECK(c.omega ==
          doctest::Approx(1.0 / (qy * qy * qy) / (qp * qp) / (qp * (qp - 1)))
              .epsilon(1e-15));
  }
}

TEST_CASE("enumeration is lexicographic in (qy, ky, qp, kp2, kp1)") {
  const CubeGrid grid = build_grid(3, 4);
  using Key = std::tuple<int, int, int, int, int>;
  Key prev{0, 0, 0, 0, 0};
  std::set<Key> seen;
  for (const CubeIndex& c : grid.cubes) {
    const Key key{c.qy, c.ky, c.qp, c.kp2, c.kp1};
    CHECK(key > prev);
    prev = key;
    CHECK(seen.insert(key).second);
  }
  CHECK(seen.size() == grid.size());
}

TEST_CASE("total weight sums the per-cube weights") {
  const CubeGrid grid = build_grid(5, 5);
  double total = 0.0;
  for (const CubeIndex& c : grid.cubes) total += c.omega;
  CHECK(grid.total_weight == doctest::Approx(total).epsilon(1e-14));
  /* summing both treatment arms keeps the weighted mass below one */
  CHECK(2.0 * total < 1.0);
}

TEST_CASE("membership includes both interval endpoints") {
  CHECK(cube_membership(0.2, 0.2, 0.2));
  CHECK(cube_membership(0.4, 0.2, 0.2));
  CHECK(cube_membership(0.3, 0.2, 0.2));
  CHECK_FALSE(cube_membership(0.41, 0.2, 0.2));
  CHECK_FALSE(cube_membership(0.19, 0.2, 0.2));
}
