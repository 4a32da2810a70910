#pragma once

#include <optional>
#include <string>

#include "osmid/ad/ops.hpp"
#include "osmid/features/pyramid.hpp"
#include "osmid/nn/module.hpp"

namespace osmid::optical {

struct OpticalConfig {
  int common_channels = 64;  // channel width shared by all pyramid levels
  int fine_c1 = 24;          // fine branch width at divisor 1
  int fine_c2 = 32;          // at divisor 2
  int fine_c3 = 48;          // at divisor 4
  uint64_t coarse_seed = 91;   // frozen patch embedder init
  uint64_t fine_seed = 92;
  // optional per-tile cache of externally computed coarse features
  std::string feature_cache_dir;
};

// Frozen stride-16 patch embedder (coarse) combined with a trainable
// convolutional fine branch; every level projected to a common width.
class OpticalBackbone {
 public:
  explicit OpticalBackbone(const OpticalConfig& cfg);

  // Graph-building pass used by the stage-2 trainer.
  std::array<ad::Var, 3> encode(ad::Tape& tape, const data::ImageTile& tile);

  // Value-level pass for inference.
  features::FeaturePyramid encode_optical(const data::ImageTile& tile);

  std::string freeze_report() const { return params_.digest("coarse."); }

  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  const OpticalConfig& config() const { return cfg_; }

 private:
  Tensor coarse_features(const data::ImageTile& tile);

  OpticalConfig cfg_;
  nn::ParamStore params_;
  nn::Conv2d patch_;              // frozen, kernel 16 stride 16
  nn::Conv2d f1_, f2_, f3_, f4_;  // fine branch
  nn::Conv2d proj_coarse_, proj_fine4_, proj_fine1_;
};

}  // namespace osmid::optical
