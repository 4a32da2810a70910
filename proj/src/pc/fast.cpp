#include "osmid/pc/fast.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace osmid::pc {

namespace {
// Bresenham circle of radius 3, clockwise from 12 o'clock.
constexpr int kCircle[16][2] = {
    {0, -3}, {1, -3}, {2, -2}, {3, -1}, {3, 0}, {3, 1}, {2, 2}, {1, 3},
    {0, 3},  {-1, 3}, {-2, 2}, {-3, 1}, {-3, 0}, {-3, -1}, {-2, -2}, {-1, -3}};
constexpr int kArc = 9;

// Longest qualifying contiguous run (circular); returns summed excess of
// the best run of length >= kArc, or 0 when none qualifies.
double best_arc_score(const double excess[16]) {
  double best = 0.0;
  for (int start = 0; start < 16; ++start) {
    if (excess[start] <= 0.0) continue;
    double acc = 0.0;
    int len = 0;
    for (int k = 0; k < 16; ++k) {
      const int idx = (start + k) % 16;
      if (excess[idx] > 0.0) {
        acc += excess[idx];
        ++len;
        if (len >= kArc) best = std::max(best, acc);
      } else {
        break;
      }
    }
  }
  return best;
}
}  // namespace

std::vector<features::Keypoint> detect_fast(const PcMap& pc, double threshold,
                                            int nms_radius, int max_keypoints) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw std::invalid_argument("detect_fast: threshold must be in (0,1)");
  if (nms_radius < 1) throw std::invalid_argument("detect_fast: nms_radius must be >= 1");
  const Tensor& map = pc.values;
  const int h = map.dim(0), w = map.dim(1);

  std::vector<features::Keypoint> candidates;
  double bright[16], dark[16];
  for (int y = 3; y < h - 3; ++y) {
    for (int x = 3; x < w - 3; ++x) {
      const double v = map.at3(y, x, 0);
      int n_bright = 0, n_dark = 0;
      for (int i = 0; i < 16; ++i) {
        const double p = map.at3(y + kCircle[i][1], x + kCircle[i][0], 0);
        bright[i] = p - v - threshold;
        dark[i] = v - p - threshold;
        if (bright[i] > 0) ++n_bright;
        if (dark[i] > 0) ++n_dark;
      }
      if (n_bright < kArc && n_dark < kArc) continue;
      const double score = std::max(best_arc_score(bright), best_arc_score(dark));
      if (score > 0.0)
        candidates.push_back({static_cast<double>(x), static_cast<double>(y), score});
    }
  }

  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const auto& a, const auto& b) { return a.score > b.score; });

  // greedy NMS by descending score
  std::vector<features::Keypoint> kept;
  const double r2 = static_cast<double>(nms_radius) * nms_radius;
  for (const auto& c : candidates) {
    bool suppressed = false;
    for (const auto& k : kept) {
      const double dx = c.x - k.x, dy = c.y - k.y;
      if (dx * dx + dy * dy < r2) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) {
      kept.push_back(c);
      if (static_cast<int>(kept.size()) >= max_keypoints) break;
    }
  }
  return kept;
}

}  // namespace osmid::pc
