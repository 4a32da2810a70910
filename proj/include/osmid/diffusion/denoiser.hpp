#pragma once

#include <array>
#include <memory>
#include <optional>

#include "osmid/ad/ops.hpp"
#include "osmid/features/pyramid.hpp"
#include "osmid/nn/module.hpp"
#include "osmid/prompt/prompt.hpp"

namespace osmid::diffusion {

struct DenoiserConfig {
  int base_channels = 16;  // doubles at each of the two downsamplings
  int time_dim = 64;
  int prompt_dim = prompt::kDefaultEmbedDim;
  int groups = 8;
  uint64_t init_seed = 1234;
  bool train_base = false;  // frozen base branch unless end-to-end mode
};

// Denoising condition: SAR image in [0,1] plus the prompt. When the
// class vector is present the prompt embedding is recomputed in-graph
// through the learnable table so it receives gradients.
struct Condition {
  Tensor sar;  // [H,W,1]
  Tensor prompt_embedding;  // [E]
  std::optional<std::array<double, prompt::kNumClasses>> class_vector;
};

Condition make_condition(const data::ImageTile& sar_tile,
                         const std::array<double, prompt::kNumClasses>& land_use,
                         const Tensor& prompt_table);

struct DenoiserOutput {
  ad::Var eps_hat;              // [H,W,1]
  std::array<ad::Var, 3> taps;  // decoder activations at divisors 4, 2, 1
};

// U-shaped noise predictor with a frozen base branch and a trainable
// conditioning branch fused through zero-initialized projections.
class DenoiserNet {
 public:
  explicit DenoiserNet(const DenoiserConfig& cfg);

  DenoiserOutput forward(ad::Tape& tape, const Tensor& x_t, int t,
                         const Condition& cond, bool use_condition = true);

  // Convenience inference pass without gradient bookkeeping.
  Tensor predict(const Tensor& x_t, int t, const Condition& cond,
                 bool use_condition = true);

  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  const DenoiserConfig& config() const { return cfg_; }

  Tensor& prompt_table() { return params_.at("prompt.table").value; }
  const Tensor& prompt_table() const { return params_.at("prompt.table").value; }

  std::string frozen_digest() const { return params_.digest("base."); }

 private:
  struct ResBlock {
    nn::GroupNorm gn1, gn2;
    nn::Conv2d conv1, conv2;
    nn::Linear temb_proj;
    nn::Conv2d skip;
    bool has_skip = false;

    ad::Var operator()(ad::Tape& t, ad::Var x, ad::Var temb) const;
  };

  ResBlock make_res(const std::string& name, int cin, int cout, bool trainable,
                    uint64_t salt);

  DenoiserConfig cfg_;
  nn::ParamStore params_;

  // base branch
  nn::Conv2d b_in_;
  ResBlock b_enc1_, b_enc2_, b_mid_, b_dec2_, b_dec1_;
  nn::Conv2d b_down1_, b_down2_, b_up2_, b_up1_;
  nn::GroupNorm b_out_gn_;
  nn::Conv2d b_out_;
  nn::Linear b_temb1_, b_temb2_;

  // conditioning branch
  nn::Conv2d c_in_, c_hint1_, c_hint2_;
  ResBlock c_enc1_, c_enc2_, c_mid_;
  nn::Conv2d c_down1_, c_down2_;
  nn::Conv2d zero1_, zero2_, zero_mid_;
  nn::Linear c_temb1_, c_temb2_, c_prompt_;

  ad::Var time_embedding(ad::Tape& tape, int t) const;
};

}  // namespace osmid::diffusion
