#include <doctest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "osmid/data/synthetic.hpp"
#include "osmid/data/warp.hpp"
#include "osmid/pc/fast.hpp"
#include "osmid/pc/phase_congruency.hpp"

#include "oracles.hpp"

using namespace osmid;
using namespace osmid::pc;

namespace {

Tensor step_edge_image(int size, int edge_col, double lo = 0.2, double hi = 0.8) {
  Tensor img({size, size, 1});
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) img.at3(y, x, 0) = x < edge_col ? lo : hi;
  return img;
}

}  // namespace

TEST_CASE("constant tile yields a near-zero pc map") {
  Tensor img = Tensor::full({64, 64, 1}, 0.5);
  PcMap pc = compute_pc_map(img, PcConfig{});
  CHECK(pc.values.max() < 0.02);
}

TEST_CASE("step edge: maximal pc response lies on the edge column") {
  const int size = 64, edge = 32;
  Tensor img = step_edge_image(size, edge);
  PcMap pc = compute_pc_map(img, PcConfig{});

  // 1-D oracle on the row profile confirms the edge is where phase congruency peaks
  std::vector<double> profile(static_cast<size_t>(size));
  for (int x = 0; x < size; ++x) profile[static_cast<size_t>(x)] = img.at3(0, x, 0);
  // interior columns only: FFT periodicity creates a second (wrap-around)
  // edge at the image boundary
  auto oracle = osmid::testing::pc_1d_oracle(profile, PcConfig{});
  int oracle_argmax = 8;
  for (int x = 8; x < size - 8; ++x)
    if (oracle[static_cast<size_t>(x)] > oracle[static_cast<size_t>(oracle_argmax)]) oracle_argmax = x;
  CHECK(std::abs(oracle_argmax - edge) <= 1);

  // 2-D map: per interior row, the interior argmax column within +-1 of the edge
  for (int y = 8; y < size - 8; ++y) {
    int argmax = 8;
    for (int x = 8; x < size - 8; ++x)
      if (pc.values.at3(y, x, 0) > pc.values.at3(y, argmax, 0)) argmax = x;
    CAPTURE(y);
    CHECK(std::abs(argmax - edge) <= 1);
  }
}

TEST_CASE("pc is nearly invariant to affine intensity changes") {
  const int size = 64;
  // noise-free synthetic edge image with two edges
  Tensor img({size, size, 1});
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      img.at3(y, x, 0) = (x < 20 ? 0.25 : (x < 44 ? 0.7 : 0.4));
  PcMap base = compute_pc_map(img, PcConfig{});
  Tensor scaled = img;
  for (double& v : scaled.data) v = 0.5 * v + 0.2;
  PcMap after = compute_pc_map(scaled, PcConfig{});
  double max_diff = 0;
  for (int64_t i = 0; i < base.values.numel(); ++i)
    max_diff = std::max(max_diff, std::fabs(base.values[i] - after.values[i]));
  CHECK(max_diff < 0.05);
}

TEST_CASE("pc rejects tiny tiles and bad configs") {
  PcConfig cfg;
  Tensor tiny = Tensor::full({4, 4, 1}, 0.5);
  CHECK_THROWS_AS(compute_pc_map(tiny, cfg), std::invalid_argument);
  PcConfig bad;
  bad.n_orientations = 1;
  Tensor ok = Tensor::full({64, 64, 1}, 0.5);
  CHECK_THROWS_AS(compute_pc_map(ok, bad), std::invalid_argument);
}

TEST_CASE("constant pc map produces no keypoints") {
  PcMap pc;
  pc.values = Tensor::full({64, 64, 1}, 0.3);
  CHECK(detect_fast(pc, 0.08, 4, 1000).empty());
}

TEST_CASE("single corner: detector and exhaustive segment-test oracle agree") {
  // one convex corner inside the frame; the block's other corners lie on
  // the border margin where the circle does not fit
  const int size = 64, cx = 40, cy = 40;
  PcMap pc;
  pc.values = Tensor({size, size, 1});
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      pc.values.at3(y, x, 0) = (x <= cx && y <= cy) ? 0.9 : 0.0;

  // independent oracle: literal contiguous-arc scan at every pixel
  const int circle[16][2] = {{0, -3}, {1, -3}, {2, -2}, {3, -1}, {3, 0}, {3, 1},
                             {2, 2},  {1, 3},  {0, 3},  {-1, 3}, {-2, 2}, {-3, 1},
                             {-3, 0}, {-3, -1}, {-2, -2}, {-1, -3}};
  const double thr = 0.08;
  std::vector<std::pair<int, int>> oracle_hits;
  for (int y = 3; y < size - 3; ++y)
    for (int x = 3; x < size - 3; ++x) {
      const double v = pc.values.at3(y, x, 0);
      for (int mode = 0; mode < 2; ++mode) {
        bool found = false;
        for (int start = 0; start < 16 && !found; ++start) {
          int run = 0;
          for (int k = 0; k < 16; ++k) {
            const int i = (start + k) % 16;
            const double p = pc.values.at3(y + circle[i][1], x + circle[i][0], 0);
            const bool on = mode == 0 ? (p > v + thr) : (p < v - thr);
            if (on) {
              if (++run >= 9) {
                found = true;
                break;
              }
            } else {
              break;
            }
          }
        }
        if (found) {
          oracle_hits.emplace_back(x, y);
          break;
        }
      }
    }
  REQUIRE_FALSE(oracle_hits.empty());
  for (auto [x, y] : oracle_hits) {
    CHECK(std::hypot(x - cx, y - cy) <= 2.0 + 1e-9);
  }

  auto kps = detect_fast(pc, thr, 4, 100);
  REQUIRE(kps.size() == 1);
  CHECK(std::hypot(kps[0].x - cx, kps[0].y - cy) <= 2.0);
}

TEST_CASE("nms contract: descending scores, pairwise separation, determinism") {
  data::PairSample pair = data::generate_synthetic_pair(31, 128);
  PcMap pc = compute_pc_map(pair.optical, PcConfig{});
  auto kps = detect_fast(pc, 0.08, 4, 500);
  REQUIRE(kps.size() > 10);
  for (size_t i = 1; i < kps.size(); ++i) CHECK(kps[i - 1].score >= kps[i].score);
  for (size_t i = 0; i < kps.size(); ++i)
    for (size_t j = i + 1; j < kps.size(); ++j)
      CHECK(std::hypot(kps[i].x - kps[j].x, kps[i].y - kps[j].y) >= 4.0);
  auto again = detect_fast(pc, 0.08, 4, 500);
  REQUIRE(again.size() == kps.size());
  for (size_t i = 0; i < kps.size(); ++i) {
    CHECK(again[i].x == kps[i].x);
    CHECK(again[i].y == kps[i].y);
  }
}

TEST_CASE("detect_fast validates parameters") {
  PcMap pc;
  pc.values = Tensor::full({64, 64, 1}, 0.0);
  CHECK_THROWS_AS(detect_fast(pc, 0.0, 4, 10), std::invalid_argument);
  CHECK_THROWS_AS(detect_fast(pc, 1.0, 4, 10), std::invalid_argument);
  CHECK_THROWS_AS(detect_fast(pc, 0.1, 0, 10), std::invalid_argument);
}

TEST_CASE("keypoints stable under intensity gain") {
  data::PairSample pair = data::generate_synthetic_pair(32, 128);
  Tensor lum = data::luminance(pair.optical.pixels);
  // keep every gain in [0.5,2] clip-free so the check isolates contrast
  // behaviour rather than saturation
  for (double& v : lum.data) v = 0.1 + 0.35 * v;
  PcMap base_pc = compute_pc_map(lum, PcConfig{});
  auto base = detect_fast(base_pc, 0.08, 4, 300);
  REQUIRE(base.size() > 20);

  for (double gain : {0.5, 0.8, 1.25, 2.0}) {
    Tensor scaled = lum;
    for (double& v : scaled.data) v = v * gain;
    PcMap pc = compute_pc_map(scaled, PcConfig{});
    auto kps = detect_fast(pc, 0.08, 4, 300);
    int recovered = 0;
    for (const auto& kb : base) {
      for (const auto& k : kps) {
        if (std::hypot(k.x - kb.x, k.y - kb.y) <= 1.0) {
          ++recovered;
          break;
        }
      }
    }
    CAPTURE(gain);
    CHECK(static_cast<double>(recovered) / base.size() >= 0.9);
  }
}

TEST_CASE("repeatability under 10 degree rotation") {
  data::PairSample pair = data::generate_synthetic_pair(33, 128);
  Tensor lum = data::luminance(pair.optical.pixels);
  const double th = 10.0 * M_PI / 180.0;
  data::Homography rot = data::Homography::similarity_about(64, 64, th, 1.0);
  Tensor rotated = data::warp_image(lum, rot.inverse(), 128, 128);

  auto base = detect_fast(compute_pc_map(lum, PcConfig{}), 0.08, 4, 400);
  auto after = detect_fast(compute_pc_map(rotated, PcConfig{}), 0.08, 4, 400);
  REQUIRE(base.size() > 20);

  int considered = 0, recovered = 0;
  for (const auto& kb : base) {
    auto [rx, ry] = rot.apply(kb.x, kb.y);  // where it should appear
    if (rx < 8 || ry < 8 || rx > 120 || ry > 120) continue;
    ++considered;
    for (const auto& k : after) {
      if (std::hypot(k.x - rx, k.y - ry) <= 2.0) {
        ++recovered;
        break;
      }
    }
  }
  REQUIRE(considered > 10);
  CHECK(static_cast<double>(recovered) / considered >= 0.6);
}
