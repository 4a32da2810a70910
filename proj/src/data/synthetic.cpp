#include "osmid/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include "osmid/core/rng.hpp"
#include "osmid/data/warp.hpp"

namespace osmid::data {

namespace {

constexpr uint64_t kTagField = 0x6669656c64ull;
constexpr uint64_t kTagMix = 0x6d6978ull;
constexpr uint64_t kTagTexture = 0x74657874ull;
constexpr uint64_t kTagIllum = 0x696c6cull;
constexpr uint64_t kTagHomography = 0x67746877ull;
constexpr uint64_t kTagSpeckle = 0x7370636bull;

// Smooth random field: a handful of low-frequency cosine waves plus a
// few Gaussian bumps. Level sets give coherent layered regions.
Tensor smooth_field(uint64_t seed, int size) {
  auto rng = make_rng({seed, kTagField});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  struct Wave {
    double fx, fy, phase, amp;
  };
  std::vector<Wave> waves;
  for (int i = 0; i < 6; ++i) {
    double freq = (0.5 + 2.5 * unit(rng)) / size;  // 0.5..3 cycles per tile
    double ang = 2.0 * M_PI * unit(rng);
    waves.push_back({freq * std::cos(ang), freq * std::sin(ang),
                     2.0 * M_PI * unit(rng), 0.4 + 0.6 * unit(rng)});
  }
  struct Bump {
    double cx, cy, r, amp;
  };
  std::vector<Bump> bumps;
  for (int i = 0; i < 4; ++i) {
    bumps.push_back({size * unit(rng), size * unit(rng),
                     size * (0.1 + 0.25 * unit(rng)),
                     (unit(rng) < 0.5 ? -1.0 : 1.0) * (0.5 + unit(rng))});
  }
  Tensor f({size, size, 1});
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double v = 0.0;
      for (const auto& wv : waves)
        v += wv.amp * std::cos(2.0 * M_PI * (wv.fx * x + wv.fy * y) + wv.phase);
      for (const auto& b : bumps) {
        double dx = (x - b.cx) / b.r, dy = (y - b.cy) / b.r;
        v += b.amp * std::exp(-0.5 * (dx * dx + dy * dy));
      }
      f.at3(y, x, 0) = v;
    }
  return f;
}

std::array<double, prompt::kNumClasses> random_mix(uint64_t seed) {
  auto rng = make_rng({seed, kTagMix});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> nc(3, 5);
  const int active = nc(rng);
  std::array<int, prompt::kNumClasses> order{};
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::array<double, prompt::kNumClasses> mix{};
  double sum = 0.0;
  for (int i = 0; i < active; ++i) {
    double w = 0.2 + unit(rng);
    mix[static_cast<size_t>(order[static_cast<size_t>(i)])] = w;
    sum += w;
  }
  for (double& v : mix) v /= sum;
  return mix;
}

struct Palette {
  double r, g, b;
};
constexpr Palette kPalette[prompt::kNumClasses] = {
    {0.46, 0.62, 0.30},  // farmland
    {0.58, 0.55, 0.53},  // city
    {0.64, 0.51, 0.38},  // village
    {0.14, 0.24, 0.44},  // water
    {0.10, 0.34, 0.17},  // forest
    {0.30, 0.30, 0.33},  // road
    {0.72, 0.66, 0.51},  // others
};

// Textures are phase-modulated by a smooth field so no class repeats
// periodically; periodic gratings would make distinct keypoints look
// identical to any local descriptor.
double class_texture(int cls, double x, double y, const std::array<double, 4>& tp,
                     double warp1, double warp2) {
  const double u = 2.0 * M_PI * (x * tp[0] + y * tp[1]) + tp[2] + 4.0 * warp1;
  const double v = 2.0 * M_PI * (x * tp[1] * 1.618 - y * tp[0] * 1.327) + tp[3] + 4.0 * warp2;
  switch (cls) {
    case 0:  // farmland: wobbly stripes with a weak cross component
      return 0.10 * std::sin(u) + 0.03 * std::sin(v);
    case 1:  // city: irregular grid
      return 0.09 * std::sin(u) * std::sin(v) + 0.04 * std::sin(1.71 * v + warp1);
    case 2:  // village: coarse clusters
      return 0.08 * std::sin(0.6 * u) * std::cos(v) + 0.035 * std::sin(2.3 * u + warp2);
    case 3:  // water: nearly flat
      return 0.015 * std::sin(0.3 * u);
    case 4:  // forest: multi-octave roughness
      return 0.05 * std::sin(u) + 0.04 * std::sin(2.17 * v) +
             0.025 * std::sin(4.41 * u + 1.9 * warp2);
    case 5:  // road: flat
      return 0.0;
    default:  // others: gentle undulation with mild detail
      return 0.04 * std::sin(0.6 * u) + 0.02 * std::sin(2.9 * v);
  }
}

}  // namespace

Tensor synth_label_map(uint64_t seed, int size,
                       const std::array<double, prompt::kNumClasses>& mix) {
  Tensor field = smooth_field(seed, size);
  const int64_t n = static_cast<int64_t>(size) * size;
  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    return field.data[static_cast<size_t>(a)] < field.data[static_cast<size_t>(b)];
  });
  // quantile bins: class c owns ranks [cum_{c-1}*n, cum_c*n)
  Tensor labels({size, size, 1});
  double cum = 0.0;
  int64_t lo = 0;
  for (int c = 0; c < prompt::kNumClasses; ++c) {
    cum += mix[static_cast<size_t>(c)];
    int64_t hi = (c == prompt::kNumClasses - 1)
                     ? n
                     : std::min<int64_t>(n, static_cast<int64_t>(std::llround(cum * n)));
    for (int64_t r = lo; r < hi; ++r)
      labels.data[static_cast<size_t>(order[static_cast<size_t>(r)])] = c;
    lo = std::max(lo, hi);
  }
  return labels;
}

std::array<double, prompt::kNumClasses> measure_land_use(const Tensor& labels) {
  std::array<double, prompt::kNumClasses> frac{};
  for (double v : labels.data) frac[static_cast<size_t>(std::lround(v))] += 1.0;
  const double n = static_cast<double>(labels.numel());
  for (double& v : frac) v /= n;
  return frac;
}

Tensor render_optical(const Tensor& labels, uint64_t seed) {
  const int size = labels.dim(0);
  auto rng = make_rng({seed, kTagTexture});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::array<std::array<double, 4>, prompt::kNumClasses> tex_params{};
  for (auto& tp : tex_params) {
    // pixel-based wavelengths (8..24 px) so detail density does not thin
    // out on larger tiles
    const double freq = 1.0 / (8.0 + 16.0 * unit(rng));
    tp = {freq, freq * (0.5 + unit(rng)), 2.0 * M_PI * unit(rng),
          2.0 * M_PI * unit(rng)};
  }
  auto irng = make_rng({seed, kTagIllum});
  std::uniform_real_distribution<double> ill(-0.05, 0.05);
  const double gx = ill(irng), gy = ill(irng);

  // low-frequency phase fields that de-periodize the textures
  Tensor warp1 = smooth_field(seed_mix({seed, 0x77617270ull, 1}), size);
  Tensor warp2 = smooth_field(seed_mix({seed, 0x77617270ull, 2}), size);

  Tensor img({size, size, 3});
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const int cls = static_cast<int>(std::lround(labels.at3(y, x, 0)));
      const double t = class_texture(cls, x, y, tex_params[static_cast<size_t>(cls)],
                                     warp1.at3(y, x, 0), warp2.at3(y, x, 0));
      const double illum = gx * (x - size / 2.0) / size + gy * (y - size / 2.0) / size;
      const Palette& p = kPalette[cls];
      img.at3(y, x, 0) = std::clamp(p.r + t + illum, 0.0, 1.0);
      img.at3(y, x, 1) = std::clamp(p.g + t + illum, 0.0, 1.0);
      img.at3(y, x, 2) = std::clamp(p.b + t * 0.8 + illum, 0.0, 1.0);
    }
  return gaussian_blur(img, 0.6);
}

Tensor radiometric_remap(const Tensor& lum, const Tensor& labels,
                         const SarModel& model) {
  if (lum.shape != labels.shape)
    throw std::invalid_argument("radiometric_remap: label map must match luminance");
  Tensor out = lum;
  for (int64_t i = 0; i < lum.numel(); ++i) {
    const int cls = static_cast<int>(std::lround(labels.data[static_cast<size_t>(i)]));
    const double v = std::pow(std::max(lum.data[static_cast<size_t>(i)], 0.0),
                              model.remap_exponent);
    out.data[static_cast<size_t>(i)] = model.gain[static_cast<size_t>(cls)] * v;
  }
  return out;
}

Tensor apply_speckle(const Tensor& img, uint64_t seed, double shape) {
  auto rng = make_rng({seed, kTagSpeckle});
  std::gamma_distribution<double> gamma(shape, 1.0 / shape);  // unit mean
  Tensor out = img;
  for (double& v : out.data) v *= gamma(rng);
  return out;
}

PairSample generate_synthetic_pair(
    uint64_t rng_seed, int size,
    std::optional<std::array<double, prompt::kNumClasses>> class_mix) {
  if (size < 64)
    throw std::invalid_argument("generate_synthetic_pair: size must be >= 64");
  if (size % 16 != 0)
    throw std::invalid_argument("generate_synthetic_pair: size must be divisible by 16");

  const auto mix = class_mix ? *class_mix : random_mix(rng_seed);
  double mix_sum = 0.0;
  for (double v : mix) {
    if (v < 0.0) throw std::invalid_argument("generate_synthetic_pair: class_mix entries must be >= 0");
    mix_sum += v;
  }
  if (mix_sum <= 0.0)
    throw std::invalid_argument("generate_synthetic_pair: class_mix must have positive mass");
  std::array<double, prompt::kNumClasses> norm_mix = mix;
  for (double& v : norm_mix) v /= mix_sum;

  Tensor labels = synth_label_map(rng_seed, size, norm_mix);
  const auto land_use = measure_land_use(labels);
  Tensor optical = render_optical(labels, rng_seed);

  const Homography h_gt =
      sample_gt_homography(seed_mix({rng_seed, kTagHomography}), RotScaleRange{}, size);
  const Homography sar_to_opt = h_gt.inverse();

  Tensor warped = warp_image(optical, sar_to_opt, size, size);
  Tensor warped_labels = warp_nearest(labels, sar_to_opt, size, size);
  Tensor sar = radiometric_remap(luminance(warped), warped_labels, SarModel{});
  sar = apply_speckle(sar, rng_seed, SarModel{}.speckle_shape);
  sar = gaussian_blur(sar, SarModel{}.blur_sigma);
  for (double& v : sar.data) v = std::clamp(v, 0.0, 1.0);

  PairSample pair;
  pair.optical = ImageTile{std::move(optical), Modality::optical,
                           "synth-" + std::to_string(rng_seed) + "-opt"};
  pair.sar = ImageTile{std::move(sar), Modality::sar,
                       "synth-" + std::to_string(rng_seed) + "-sar"};
  pair.h_gt = h_gt;
  pair.land_use = land_use;
  pair.prompt = prompt::build_prompt(
      land_use, prompt::init_prompt_table(prompt::kDefaultEmbedDim, 0));
  pair.validate();
  return pair;
}

}  // namespace osmid::data
