#include "osmid/optical/encoder.hpp"

#include <filesystem>

#include "osmid/core/tensor_io.hpp"

namespace osmid::optical {

using ad::Var;

OpticalBackbone::OpticalBackbone(const OpticalConfig& cfg) : cfg_(cfg) {
  const int c = cfg.common_channels;
  patch_ = nn::Conv2d::make(params_, "coarse.patch", 16, 16, 3, c, 16, 0,
                            seed_mix({cfg.coarse_seed, 1}), /*trainable=*/false);
  // two full-resolution blocks feed the divisor-1 level so fine detail
  // survives the later resampling to the unified scale
  f1_ = nn::Conv2d::make(params_, "fine.b1", 3, 3, 3, cfg.fine_c1, 1, 1,
                         seed_mix({cfg.fine_seed, 1}));
  f2_ = nn::Conv2d::make(params_, "fine.b2", 3, 3, cfg.fine_c1, cfg.fine_c1, 1, 1,
                         seed_mix({cfg.fine_seed, 2}));
  f3_ = nn::Conv2d::make(params_, "fine.b3", 3, 3, cfg.fine_c1, cfg.fine_c2, 2, 1,
                         seed_mix({cfg.fine_seed, 3}));
  f4_ = nn::Conv2d::make(params_, "fine.b4", 3, 3, cfg.fine_c2, cfg.fine_c3, 2, 1,
                         seed_mix({cfg.fine_seed, 4}));
  proj_coarse_ = nn::Conv2d::make(params_, "proj.coarse", 1, 1, c, c, 1, 0,
                                  seed_mix({cfg.fine_seed, 5}));
  proj_fine4_ = nn::Conv2d::make(params_, "proj.fine4", 1, 1, cfg.fine_c3, c, 1, 0,
                                 seed_mix({cfg.fine_seed, 6}));
  proj_fine1_ = nn::Conv2d::make(params_, "proj.fine1", 1, 1, cfg.fine_c1, c, 1, 0,
                                 seed_mix({cfg.fine_seed, 7}));
  // small positive bias keeps relu units alive at init
  for (nn::Conv2d* conv : {&f1_, &f2_, &f3_, &f4_})
    std::fill(conv->b->value.data.begin(), conv->b->value.data.end(), 0.02);
}

namespace {
Tensor recenter(const Tensor& unit) {
  Tensor out = unit;
  for (double& v : out.data) v = 2.0 * v - 1.0;
  return out;
}
}  // namespace

Tensor OpticalBackbone::coarse_features(const data::ImageTile& tile) {
  // feature-cache hook: externally computed coarse maps replace the
  // built-in patch embedder when a cache entry exists for this tile id
  if (!cfg_.feature_cache_dir.empty()) {
    const std::string path = cfg_.feature_cache_dir + "/" + tile.tile_id + ".osten";
    if (std::filesystem::exists(path)) {
      TensorFile tf = TensorFile::load(path);
      const Tensor& cached = tf.at("coarse");
      if (cached.ndim() != 3 || cached.dim(2) != cfg_.common_channels ||
          cached.dim(0) != tile.height() / 16 || cached.dim(1) != tile.width() / 16)
        throw std::invalid_argument("feature cache: wrong shape for " + tile.tile_id);
      return cached;
    }
  }
  ad::Tape tape;
  Var x = ad::constant(tape, recenter(tile.pixels));
  return patch_(tape, x).value();
}

std::array<Var, 3> OpticalBackbone::encode(ad::Tape& tape, const data::ImageTile& tile) {
  if (tile.modality != data::Modality::optical)
    throw std::invalid_argument("encode_optical: tile modality must be optical");
  if (tile.height() % 16 != 0 || tile.width() % 16 != 0)
    throw std::invalid_argument("encode_optical: H and W must be divisible by 16");

  // frozen coarse map enters the graph as a constant; its parameters can
  // never receive gradients
  Var coarse = ad::constant(tape, coarse_features(tile));
  Var lvl16 = proj_coarse_(tape, coarse);

  Var x = ad::constant(tape, recenter(tile.pixels));
  Var b1 = ad::leaky_relu(f1_(tape, x));   // divisor 1
  Var b2 = ad::leaky_relu(f2_(tape, b1));  // divisor 1
  Var b3 = ad::leaky_relu(f3_(tape, b2));  // divisor 2
  Var b4 = ad::leaky_relu(f4_(tape, b3));  // divisor 4
  Var lvl4 = proj_fine4_(tape, b4);
  Var lvl1 = proj_fine1_(tape, b2);
  return {lvl16, lvl4, lvl1};
}

features::FeaturePyramid OpticalBackbone::encode_optical(const data::ImageTile& tile) {
  ad::Tape tape;
  auto levels = encode(tape, tile);
  features::FeaturePyramid pyr;
  pyr.source = data::Modality::optical;
  pyr.levels.push_back({16, levels[0].value()});
  pyr.levels.push_back({4, levels[1].value()});
  pyr.levels.push_back({1, levels[2].value()});
  pyr.validate();
  return pyr;
}

}  // namespace osmid::optical
