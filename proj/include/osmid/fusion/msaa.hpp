#pragma once

#include <vector>

#include "osmid/ad/ops.hpp"
#include "osmid/features/pyramid.hpp"
#include "osmid/nn/module.hpp"

namespace osmid::fusion {

struct FusedMap {
  Tensor fmap;  // [H/u, W/u, C]
  std::vector<double> beta;
  int unified_divisor = 4;
};

// Multi-scale aggregation: one conv head per pyramid level, bilinear
// resampling to the unified scale, softmax-weighted sum over learnable
// scale logits.
class MsaaFusion {
 public:
  static MsaaFusion make(nn::ParamStore& ps, const std::string& prefix,
                         int n_levels, int channels, int unified_divisor,
                         uint64_t seed);

  // Per-level conv head + resample to the unified grid.
  std::vector<ad::Var> project_and_align(ad::Tape& tape,
                                         const std::vector<ad::Var>& levels,
                                         const std::vector<int>& divisors,
                                         int input_h, int input_w) const;

  // beta = softmax(w); fused = sum beta_i * map_i. Also returns beta.
  std::pair<ad::Var, ad::Var> aggregate(ad::Tape& tape,
                                        const std::vector<ad::Var>& aligned) const;

  int unified_divisor() const { return unified_divisor_; }
  int levels() const { return n_levels_; }
  nn::Param& scale_logits() { return *w_; }
  std::vector<nn::Conv2d>& heads() { return heads_; }

  // Value-level pass over a pyramid (inference convenience).
  FusedMap fuse_values(const features::FeaturePyramid& pyr) const;

 private:
  int n_levels_ = 0;
  int unified_divisor_ = 4;
  std::vector<nn::Conv2d> heads_;
  nn::Param* w_ = nullptr;
};

// Channel gate (shared bottleneck over avg+max pooled descriptors) then
// spatial gate (7x7 conv over channelwise avg+max).
class CbamRefine {
 public:
  static CbamRefine make(nn::ParamStore& ps, const std::string& prefix,
                         int channels, int reduction, uint64_t seed);

  struct Gates {
    ad::Var out;
    ad::Var channel_gate;  // [C]
    ad::Var spatial_gate;  // [H,W,1]
  };
  Gates refine(ad::Tape& tape, ad::Var x) const;

  FusedMap refine_values(const FusedMap& fused) const;

 private:
  nn::Linear fc1_, fc2_;
  nn::Conv2d spatial_;
};

}  // namespace osmid::fusion
