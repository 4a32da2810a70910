#pragma once

#include <array>
#include <cstdint>
#include <utility>

namespace osmid::data {

// 3x3 projective transform in pixel coordinates, normalized so m[8] == 1.
struct Homography {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Homography identity() { return Homography{}; }
  static Homography from_array(const std::array<double, 9>& a);

  // Rotation by theta (radians) and isotropic scale about (cx, cy).
  static Homography similarity_about(double cx, double cy, double theta,
                                     double scale);

  std::pair<double, double> apply(double x, double y) const;
  Homography inverse() const;
  Homography compose(const Homography& rhs) const;  // this after rhs
  double det() const;
  bool invertible(double tol = 1e-9) const;
};

struct RotScaleRange {
  double rot_lo_deg = -10.0, rot_hi_deg = 10.0;
  double scale_lo = 0.8, scale_hi = 1.0;
};

// Ground-truth similarity transform about the tile center; draws theta
// and scale uniformly from the configured ranges.
Homography sample_gt_homography(uint64_t rng_seed, const RotScaleRange& range,
                                int size);

}  // namespace osmid::data
