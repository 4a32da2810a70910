#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include "osmid/data/tile.hpp"

namespace osmid::data {

// Pinned parameters of the pseudo-SAR radiometry model.
struct SarModel {
  double speckle_shape = 4.0;   // unit-mean gamma
  double blur_sigma = 1.0;      // px
  double remap_exponent = 0.65; // monotone intensity remap v -> v^e
  // per-class gain, class order as in prompt::kClassNames
  std::array<double, prompt::kNumClasses> gain{0.80, 1.25, 1.10, 0.25,
                                               0.90, 0.35, 0.85};
};

// Individual pseudo-SAR stages, exposed so each can be tested alone.
Tensor radiometric_remap(const Tensor& lum, const Tensor& labels,
                         const SarModel& model);
Tensor apply_speckle(const Tensor& img, uint64_t seed, double shape);

// Smooth 7-class label layout via quantile-binned random field; exact
// class areas are whatever the layout realizes (measured by counting).
Tensor synth_label_map(uint64_t seed, int size,
                       const std::array<double, prompt::kNumClasses>& mix);
std::array<double, prompt::kNumClasses> measure_land_use(const Tensor& labels);

Tensor render_optical(const Tensor& labels, uint64_t seed);

// Deterministic synthetic optical / pseudo-SAR pair with known
// ground-truth homography and measured land-use fractions.
PairSample generate_synthetic_pair(
    uint64_t rng_seed, int size,
    std::optional<std::array<double, prompt::kNumClasses>> class_mix = {});

}  // namespace osmid::data
