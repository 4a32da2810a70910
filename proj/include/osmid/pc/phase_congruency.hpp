#pragma once

#include <string>

#include "osmid/core/tensor.hpp"
#include "osmid/data/tile.hpp"

namespace osmid::pc {

struct PcConfig {
  int n_scales = 4;
  int n_orientations = 6;
  double min_wavelength = 3.0;
  double scale_multiplier = 2.1;
  double sigma_onf = 0.55;
  double noise_k = 2.0;

  void validate() const;
  std::string digest() const;
};

struct PcMap {
  Tensor values;  // [H,W,1], within [0,1]
  std::string params_digest;
};

// 2-D phase congruency over a log-Gabor filter bank; energy summed over
// orientations, noise-compensated from the smallest-scale response,
// result in [0,1]. Multi-channel tiles are collapsed to luminance.
PcMap compute_pc_map(const data::ImageTile& tile, const PcConfig& cfg);

// Raw-tensor entry point shared by tests that synthesize images directly.
PcMap compute_pc_map(const Tensor& image_hw1, const PcConfig& cfg);

}  // namespace osmid::pc
