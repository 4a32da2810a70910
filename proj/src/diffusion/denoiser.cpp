#include "osmid/diffusion/denoiser.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace osmid::diffusion {

using ad::Var;

Condition make_condition(const data::ImageTile& sar_tile,
                         const std::array<double, prompt::kNumClasses>& land_use,
                         const Tensor& prompt_table) {
  if (sar_tile.modality != data::Modality::sar)
    throw std::invalid_argument("make_condition: tile must be SAR");
  Condition c;
  c.sar = sar_tile.pixels;
  c.class_vector = land_use;
  c.prompt_embedding = prompt::embed_prompt(land_use, prompt_table);
  return c;
}

DenoiserNet::ResBlock DenoiserNet::make_res(const std::string& name, int cin,
                                            int cout, bool trainable,
                                            uint64_t salt) {
  ResBlock r;
  const uint64_t s = seed_mix({cfg_.init_seed, salt});
  r.gn1 = nn::GroupNorm::make(params_, name + ".gn1", cin, std::gcd(cfg_.groups, cin), trainable);
  r.conv1 = nn::Conv2d::make(params_, name + ".conv1", 3, 3, cin, cout, 1, 1, s + 1, trainable);
  r.temb_proj = nn::Linear::make(params_, name + ".temb", cfg_.time_dim, cout, s + 2, trainable);
  r.gn2 = nn::GroupNorm::make(params_, name + ".gn2", cout, std::gcd(cfg_.groups, cout), trainable);
  r.conv2 = nn::Conv2d::make(params_, name + ".conv2", 3, 3, cout, cout, 1, 1, s + 3, trainable);
  if (cin != cout) {
    r.skip = nn::Conv2d::make(params_, name + ".skip", 1, 1, cin, cout, 1, 0, s + 4, trainable);
    r.has_skip = true;
  }
  return r;
}

Var DenoiserNet::ResBlock::operator()(ad::Tape& t, Var x, Var temb) const {
  Var h = conv1(t, ad::silu(gn1(t, x)));
  Var tb = temb_proj(t, ad::silu(temb));  // [1, cout]
  h = ad::add_bias_c(h, ad::reshape(tb, {tb.dim(1)}));
  h = conv2(t, ad::silu(gn2(t, h)));
  Var s = has_skip ? skip(t, x) : x;
  return ad::add(h, s);
}

DenoiserNet::DenoiserNet(const DenoiserConfig& cfg) : cfg_(cfg) {
  const int c1 = cfg.base_channels, c2 = 2 * c1, c3 = 4 * c1;
  const bool tb = cfg.train_base;
  const uint64_t s0 = cfg.init_seed;

  params_.create("prompt.table",
                 prompt::init_prompt_table(cfg.prompt_dim, prompt::kDefaultTableSeed),
                 true);

  b_in_ = nn::Conv2d::make(params_, "base.in", 3, 3, 1, c1, 1, 1, seed_mix({s0, 1}), tb);
  b_enc1_ = make_res("base.enc1", c1, c1, tb, 2);
  b_down1_ = nn::Conv2d::make(params_, "base.down1", 3, 3, c1, c2, 2, 1, seed_mix({s0, 3}), tb);
  b_enc2_ = make_res("base.enc2", c2, c2, tb, 4);
  b_down2_ = nn::Conv2d::make(params_, "base.down2", 3, 3, c2, c3, 2, 1, seed_mix({s0, 5}), tb);
  b_mid_ = make_res("base.mid", c3, c3, tb, 6);
  b_up2_ = nn::Conv2d::make(params_, "base.up2", 3, 3, c3, c2, 1, 1, seed_mix({s0, 7}), tb);
  b_dec2_ = make_res("base.dec2", 2 * c2, c2, tb, 8);
  b_up1_ = nn::Conv2d::make(params_, "base.up1", 3, 3, c2, c1, 1, 1, seed_mix({s0, 9}), tb);
  b_dec1_ = make_res("base.dec1", 2 * c1, c1, tb, 10);
  b_out_gn_ = nn::GroupNorm::make(params_, "base.out_gn", c1, std::gcd(cfg.groups, c1), tb);
  // the output conv must carry gradient through the frozen base, so it
  // keeps a real (seeded) initialization rather than the usual zero init
  b_out_ = nn::Conv2d::make(params_, "base.out", 3, 3, c1, 1, 1, 1, seed_mix({s0, 13}), tb);
  b_temb1_ = nn::Linear::make(params_, "base.temb1", cfg.time_dim, cfg.time_dim, seed_mix({s0, 11}), tb);
  b_temb2_ = nn::Linear::make(params_, "base.temb2", cfg.time_dim, cfg.time_dim, seed_mix({s0, 12}), tb);

  c_in_ = nn::Conv2d::make(params_, "ctrl.in", 3, 3, 1, c1, 1, 1, seed_mix({s0, 21}), true);
  c_hint1_ = nn::Conv2d::make(params_, "ctrl.hint1", 3, 3, 1, c1, 1, 1, seed_mix({s0, 22}), true);
  c_hint2_ = nn::Conv2d::make(params_, "ctrl.hint2", 3, 3, c1, c1, 1, 1, seed_mix({s0, 23}), true);
  c_enc1_ = make_res("ctrl.enc1", c1, c1, true, 24);
  c_down1_ = nn::Conv2d::make(params_, "ctrl.down1", 3, 3, c1, c2, 2, 1, seed_mix({s0, 25}), true);
  c_enc2_ = make_res("ctrl.enc2", c2, c2, true, 26);
  c_down2_ = nn::Conv2d::make(params_, "ctrl.down2", 3, 3, c2, c3, 2, 1, seed_mix({s0, 27}), true);
  c_mid_ = make_res("ctrl.mid", c3, c3, true, 28);
  zero1_ = nn::Conv2d::make(params_, "ctrl.zero1", 1, 1, c1, c1, 1, 0, 0, true, /*zero_init=*/true);
  zero2_ = nn::Conv2d::make(params_, "ctrl.zero2", 1, 1, c2, c2, 1, 0, 0, true, /*zero_init=*/true);
  zero_mid_ = nn::Conv2d::make(params_, "ctrl.zero_mid", 1, 1, c3, c3, 1, 0, 0, true, /*zero_init=*/true);
  c_temb1_ = nn::Linear::make(params_, "ctrl.temb1", cfg.time_dim, cfg.time_dim, seed_mix({s0, 29}), true);
  c_temb2_ = nn::Linear::make(params_, "ctrl.temb2", cfg.time_dim, cfg.time_dim, seed_mix({s0, 30}), true);
  c_prompt_ = nn::Linear::make(params_, "ctrl.prompt", cfg.prompt_dim, cfg.time_dim, seed_mix({s0, 31}), true);
}

Var DenoiserNet::time_embedding(ad::Tape& tape, int t) const {
  const int d = cfg_.time_dim;
  const int half = d / 2;
  Tensor emb({1, d});
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / std::max(1, half - 1));
    emb.at2(0, i) = std::sin(t * freq);
    emb.at2(0, half + i) = std::cos(t * freq);
  }
  return ad::constant(tape, std::move(emb));
}

DenoiserOutput DenoiserNet::forward(ad::Tape& tape, const Tensor& x_t, int t,
                                    const Condition& cond, bool use_condition) {
  if (x_t.ndim() != 3 || x_t.dim(2) != 1)
    throw std::invalid_argument("denoiser: x_t must be [H,W,1]");
  const int h = x_t.dim(0), w = x_t.dim(1);
  if (h % 4 != 0 || w % 4 != 0)
    throw std::invalid_argument("denoiser: spatial size must be divisible by 4");
  if (use_condition && (cond.sar.ndim() != 3 || cond.sar.dim(0) != h || cond.sar.dim(1) != w))
    throw std::invalid_argument("denoiser: condition size must match x_t");

  Var x = ad::constant(tape, x_t);
  Var sinus = time_embedding(tape, t);
  Var temb = b_temb2_(tape, ad::silu(b_temb1_(tape, sinus)));

  // base encoder
  Var x1 = b_enc1_(tape, b_in_(tape, x), temb);
  Var x2 = b_enc2_(tape, b_down1_(tape, x1), temb);
  Var xm = b_mid_(tape, b_down2_(tape, x2), temb);

  Var skip1 = x1, skip2 = x2;
  if (use_condition) {
    // conditioning branch: SAR hint recentred to [-1,1] like x_t
    Tensor sar_centered = cond.sar;
    for (double& v : sar_centered.data) v = 2.0 * v - 1.0;
    Var hint = c_hint2_(tape, ad::silu(c_hint1_(tape, ad::constant(tape, sar_centered))));

    Var pe;
    if (cond.class_vector) {
      Tensor cv({1, prompt::kNumClasses});
      for (int i = 0; i < prompt::kNumClasses; ++i)
        cv.at2(0, i) = (*cond.class_vector)[static_cast<size_t>(i)];
      pe = ad::matmul(ad::constant(tape, cv), nn::use(tape, params_.at("prompt.table")));
    } else {
      Tensor pet({1, cfg_.prompt_dim});
      for (int i = 0; i < cfg_.prompt_dim; ++i) pet.at2(0, i) = cond.prompt_embedding[i];
      pe = ad::constant(tape, pet);
    }
    Var ctemb = ad::add(c_temb2_(tape, ad::silu(c_temb1_(tape, sinus))), c_prompt_(tape, pe));

    Var cx = ad::add(c_in_(tape, x), hint);
    Var c1f = c_enc1_(tape, cx, ctemb);
    Var c2f = c_enc2_(tape, c_down1_(tape, c1f), ctemb);
    Var cmf = c_mid_(tape, c_down2_(tape, c2f), ctemb);

    xm = ad::add(xm, zero_mid_(tape, cmf));
    skip2 = ad::add(skip2, zero2_(tape, c2f));
    skip1 = ad::add(skip1, zero1_(tape, c1f));
  }

  DenoiserOutput out{Var{}, {xm, Var{}, Var{}}};

  Var u2 = b_up2_(tape, ad::resize_bilinear(xm, h / 2, w / 2));
  Var d2 = b_dec2_(tape, ad::concat_c(u2, skip2), temb);
  out.taps[1] = d2;

  Var u1 = b_up1_(tape, ad::resize_bilinear(d2, h, w));
  Var d1 = b_dec1_(tape, ad::concat_c(u1, skip1), temb);
  out.taps[2] = d1;

  out.eps_hat = b_out_(tape, ad::silu(b_out_gn_(tape, d1)));
  return out;
}

Tensor DenoiserNet::predict(const Tensor& x_t, int t, const Condition& cond,
                            bool use_condition) {
  ad::Tape tape;
  DenoiserOutput out = forward(tape, x_t, t, cond, use_condition);
  return out.eps_hat.value();
}

}  // namespace osmid::diffusion
