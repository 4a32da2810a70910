#include "osmid/data/warp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace osmid::data {

namespace {
int clampi(int v, int lo, int hi) { return std::min(std::max(v, lo), hi); }
}  // namespace

Tensor warp_image(const Tensor& img, const Homography& dst_to_src, int out_h,
                  int out_w) {
  if (img.ndim() != 3) throw std::invalid_argument("warp_image: img must be [H,W,C]");
  const int h = img.dim(0), w = img.dim(1), c = img.dim(2);
  Tensor out({out_h, out_w, c});
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      auto [sx, sy] = dst_to_src.apply(x, y);
      const double fx = std::floor(sx), fy = std::floor(sy);
      const double wx1 = sx - fx, wy1 = sy - fy;
      const int x0 = clampi(static_cast<int>(fx), 0, w - 1);
      const int x1 = clampi(static_cast<int>(fx) + 1, 0, w - 1);
      const int y0 = clampi(static_cast<int>(fy), 0, h - 1);
      const int y1 = clampi(static_cast<int>(fy) + 1, 0, h - 1);
      for (int ch = 0; ch < c; ++ch) {
        const double top = (1 - wx1) * img.at3(y0, x0, ch) + wx1 * img.at3(y0, x1, ch);
        const double bot = (1 - wx1) * img.at3(y1, x0, ch) + wx1 * img.at3(y1, x1, ch);
        out.at3(y, x, ch) = (1 - wy1) * top + wy1 * bot;
      }
    }
  }
  return out;
}

Tensor warp_nearest(const Tensor& img, const Homography& dst_to_src, int out_h,
                    int out_w) {
  const int h = img.dim(0), w = img.dim(1), c = img.dim(2);
  Tensor out({out_h, out_w, c});
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      auto [sx, sy] = dst_to_src.apply(x, y);
      const int xi = clampi(static_cast<int>(std::lround(sx)), 0, w - 1);
      const int yi = clampi(static_cast<int>(std::lround(sy)), 0, h - 1);
      for (int ch = 0; ch < c; ++ch) out.at3(y, x, ch) = img.at3(yi, xi, ch);
    }
  }
  return out;
}

Tensor gaussian_blur(const Tensor& img, double sigma) {
  if (sigma <= 0.0) return img;
  const int h = img.dim(0), w = img.dim(1), c = img.dim(2);
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(static_cast<size_t>(2 * r + 1));
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    k[static_cast<size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[static_cast<size_t>(i + r)];
  }
  for (double& v : k) v /= sum;

  auto reflect = [](int v, int n) {
    while (v < 0 || v >= n) {
      if (v < 0) v = -v - 1;
      if (v >= n) v = 2 * n - v - 1;
    }
    return v;
  };

  Tensor tmp({h, w, c});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i)
          acc += k[static_cast<size_t>(i + r)] * img.at3(y, reflect(x + i, w), ch);
        tmp.at3(y, x, ch) = acc;
      }
  Tensor out({h, w, c});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i)
          acc += k[static_cast<size_t>(i + r)] * tmp.at3(reflect(y + i, h), x, ch);
        out.at3(y, x, ch) = acc;
      }
  return out;
}

Tensor luminance(const Tensor& img) {
  const int h = img.dim(0), w = img.dim(1), c = img.dim(2);
  Tensor out({h, w, 1});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int ch = 0; ch < c; ++ch) acc += img.at3(y, x, ch);
      out.at3(y, x, 0) = acc / c;
    }
  return out;
}

Tensor sobel_magnitude(const Tensor& img) {
  if (img.dim(2) != 1) throw std::invalid_argument("sobel: single channel expected");
  const int h = img.dim(0), w = img.dim(1);
  Tensor out({h, w, 1});
  for (int y = 1; y < h - 1; ++y)
    for (int x = 1; x < w - 1; ++x) {
      const double gx = img.at3(y - 1, x + 1, 0) + 2 * img.at3(y, x + 1, 0) + img.at3(y + 1, x + 1, 0) -
                        img.at3(y - 1, x - 1, 0) - 2 * img.at3(y, x - 1, 0) - img.at3(y + 1, x - 1, 0);
      const double gy = img.at3(y + 1, x - 1, 0) + 2 * img.at3(y + 1, x, 0) + img.at3(y + 1, x + 1, 0) -
                        img.at3(y - 1, x - 1, 0) - 2 * img.at3(y - 1, x, 0) - img.at3(y - 1, x + 1, 0);
      out.at3(y, x, 0) = std::sqrt(gx * gx + gy * gy);
    }
  return out;
}

double pearson_correlation(const Tensor& a, const Tensor& b, int margin) {
  if (a.shape != b.shape) throw std::invalid_argument("correlation: shape mismatch");
  const int h = a.dim(0), w = a.dim(1);
  double ma = 0, mb = 0;
  int n = 0;
  for (int y = margin; y < h - margin; ++y)
    for (int x = margin; x < w - margin; ++x) {
      ma += a.at3(y, x, 0);
      mb += b.at3(y, x, 0);
      ++n;
    }
  ma /= n;
  mb /= n;
  double num = 0, va = 0, vb = 0;
  for (int y = margin; y < h - margin; ++y)
    for (int x = margin; x < w - margin; ++x) {
      const double da = a.at3(y, x, 0) - ma, db = b.at3(y, x, 0) - mb;
      num += da * db;
      va += da * da;
      vb += db * db;
    }
  if (va <= 0 || vb <= 0) return 0.0;
  return num / std::sqrt(va * vb);
}

}  // namespace osmid::data
