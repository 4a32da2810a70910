#include "osmid/data/geometry.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "osmid/core/rng.hpp"

namespace osmid::data {

Homography Homography::from_array(const std::array<double, 9>& a) {
  if (a[8] == 0.0) throw std::invalid_argument("homography: m[2][2] must be nonzero");
  Homography h;
  for (int i = 0; i < 9; ++i) h.m[static_cast<size_t>(i)] = a[static_cast<size_t>(i)] / a[8];
  return h;
}

Homography Homography::similarity_about(double cx, double cy, double theta,
                                        double scale) {
  const double c = std::cos(theta) * scale;
  const double s = std::sin(theta) * scale;
  Homography h;
  h.m = {c, -s, cx - c * cx + s * cy,
         s, c,  cy - s * cx - c * cy,
         0, 0,  1};
  return h;
}

std::pair<double, double> Homography::apply(double x, double y) const {
  const double w = m[6] * x + m[7] * y + m[8];
  return {(m[0] * x + m[1] * y + m[2]) / w, (m[3] * x + m[4] * y + m[5]) / w};
}

double Homography::det() const {
  return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
         m[2] * (m[3] * m[7] - m[4] * m[6]);
}

bool Homography::invertible(double tol) const { return std::fabs(det()) > tol; }

Homography Homography::inverse() const {
  const double d = det();
  if (std::fabs(d) <= 1e-12) throw std::domain_error("homography: singular");
  std::array<double, 9> a;
  a[0] = (m[4] * m[8] - m[5] * m[7]) / d;
  a[1] = (m[2] * m[7] - m[1] * m[8]) / d;
  a[2] = (m[1] * m[5] - m[2] * m[4]) / d;
  a[3] = (m[5] * m[6] - m[3] * m[8]) / d;
  a[4] = (m[0] * m[8] - m[2] * m[6]) / d;
  a[5] = (m[2] * m[3] - m[0] * m[5]) / d;
  a[6] = (m[3] * m[7] - m[4] * m[6]) / d;
  a[7] = (m[1] * m[6] - m[0] * m[7]) / d;
  a[8] = (m[0] * m[4] - m[1] * m[3]) / d;
  return from_array(a);
}

Homography Homography::compose(const Homography& rhs) const {
  std::array<double, 9> a{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      for (int k = 0; k < 3; ++k)
        a[static_cast<size_t>(r * 3 + c)] +=
            m[static_cast<size_t>(r * 3 + k)] * rhs.m[static_cast<size_t>(k * 3 + c)];
  return from_array(a);
}

Homography sample_gt_homography(uint64_t rng_seed, const RotScaleRange& range,
                                int size) {
  if (range.rot_lo_deg > range.rot_hi_deg || range.scale_lo > range.scale_hi)
    throw std::invalid_argument("homography sampling: invalid range (lo > hi)");
  if (range.scale_lo <= 0.0 || range.scale_hi <= 0.0)
    throw std::invalid_argument("homography sampling: scale range must exclude 0");
  auto rng = make_rng({rng_seed, 0x686f6d6full});
  std::uniform_real_distribution<double> rot(range.rot_lo_deg, range.rot_hi_deg);
  std::uniform_real_distribution<double> sc(range.scale_lo, range.scale_hi);
  const double theta = rot(rng) * M_PI / 180.0;
  const double s = sc(rng);
  const double c = size / 2.0;
  return Homography::similarity_about(c, c, theta, s);
}

}  // namespace osmid::data
