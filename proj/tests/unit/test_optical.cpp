#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "osmid/core/tensor_io.hpp"
#include "osmid/data/synthetic.hpp"
#include "osmid/nn/adamw.hpp"
#include "osmid/optical/encoder.hpp"

using namespace osmid;
using namespace osmid::optical;

namespace {
data::ImageTile synth_tile(uint64_t seed, int size = 128) {
  return data::generate_synthetic_pair(seed, size).optical;
}
}  // namespace

TEST_CASE("pyramid shape contract at 128") {
  OpticalBackbone bb{OpticalConfig{}};
  auto pyr = bb.encode_optical(synth_tile(1));
  REQUIRE(pyr.levels.size() == 3);
  CHECK(pyr.levels[0].scale_divisor == 16);
  CHECK(pyr.levels[0].fmap.shape == std::vector<int>{8, 8, 64});
  CHECK(pyr.levels[1].scale_divisor == 4);
  CHECK(pyr.levels[1].fmap.shape == std::vector<int>{32, 32, 64});
  CHECK(pyr.levels[2].scale_divisor == 1);
  CHECK(pyr.levels[2].fmap.shape == std::vector<int>{128, 128, 64});
}

TEST_CASE("pyramid shape contract holds for other valid sizes") {
  OpticalBackbone bb{OpticalConfig{}};
  auto pyr = bb.encode_optical(synth_tile(2, 192));
  CHECK(pyr.levels[0].fmap.shape == std::vector<int>{12, 12, 64});
  CHECK(pyr.levels[1].fmap.shape == std::vector<int>{48, 48, 64});
  CHECK(pyr.levels[2].fmap.shape == std::vector<int>{192, 192, 64});
}

TEST_CASE("wrong modality is rejected") {
  OpticalBackbone bb{OpticalConfig{}};
  data::ImageTile sar = data::generate_synthetic_pair(3, 64).sar;
  CHECK_THROWS_AS(bb.encode_optical(sar), std::invalid_argument);
}

TEST_CASE("coarse level is frozen and deterministic") {
  OpticalBackbone bb{OpticalConfig{}};
  data::ImageTile tile = synth_tile(4);
  auto a = bb.encode_optical(tile);
  auto b = bb.encode_optical(tile);
  CHECK(a.levels[0].fmap.data == b.levels[0].fmap.data);
}

TEST_CASE("freeze digest: stable across construction, sensitive to perturbation") {
  OpticalBackbone a{OpticalConfig{}};
  OpticalBackbone b{OpticalConfig{}};
  CHECK(a.freeze_report() == b.freeze_report());
  b.params().at("coarse.patch.w").value[0] += 1e-6;
  CHECK(a.freeze_report() != b.freeze_report());
}

TEST_CASE("gradient probe: fine branch live, coarse branch exactly zero") {
  OpticalBackbone bb{OpticalConfig{}};
  data::ImageTile tile = synth_tile(5);
  ad::Tape tape;
  auto levels = bb.encode(tape, tile);
  ad::Var probe = ad::add(ad::add(ad::mean_all(levels[0]), ad::mean_all(levels[1])),
                          ad::mean_all(levels[2]));
  tape.backward(probe);

  int64_t fine_total = 0, fine_nonzero = 0;
  for (nn::Param* p : bb.params().all()) {
    const bool coarse = p->name.rfind("coarse.", 0) == 0;
    if (coarse) {
      // frozen leaves must never accumulate gradient
      CHECK_FALSE(tape.bound(p));
      continue;
    }
    REQUIRE(tape.bound(p));
    const Tensor& g = tape.grad_buf(tape.binding(p).id);
    for (int64_t i = 0; i < g.numel(); ++i) {
      ++fine_total;
      if (g[i] != 0.0) ++fine_nonzero;
    }
  }
  CHECK(fine_total > 0);
  CHECK(static_cast<double>(fine_nonzero) / fine_total >= 0.99);
}

TEST_CASE("translation covariance: 16 px shift moves the coarse map one cell") {
  // two 128-wide crops of one 144-wide scene, offset by exactly 16 px
  data::PairSample big = data::generate_synthetic_pair(6, 144);
  auto crop = [&](int x0) {
    data::ImageTile t;
    t.modality = data::Modality::optical;
    t.tile_id = "crop" + std::to_string(x0);
    t.pixels = Tensor({128, 128, 3});
    for (int y = 0; y < 128; ++y)
      for (int x = 0; x < 128; ++x)
        for (int c = 0; c < 3; ++c)
          t.pixels.at3(y, x, c) = big.optical.pixels.at3(y, x + x0, c);
    return t;
  };
  OpticalBackbone bb{OpticalConfig{}};
  auto p0 = bb.encode_optical(crop(0));
  auto p1 = bb.encode_optical(crop(16));
  const Tensor& m0 = p0.levels[0].fmap;  // 8x8x64
  const Tensor& m1 = p1.levels[0].fmap;
  double max_dev = 0;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 7; ++x)  // cell x of shifted = cell x+1 of original
      for (int c = 0; c < 64; ++c)
        max_dev = std::max(max_dev, std::fabs(m1.at3(y, x, c) - m0.at3(y, x + 1, c)));
  CHECK(max_dev < 1e-4);
}

TEST_CASE("frozen digest unchanged by optimizer steps on the fine branch") {
  OpticalBackbone bb{OpticalConfig{}};
  const std::string before = bb.freeze_report();
  data::ImageTile tile = synth_tile(7);
  nn::AdamW opt;
  opt.lr = 1e-2;
  for (int i = 0; i < 3; ++i) {
    ad::Tape tape;
    auto levels = bb.encode(tape, tile);
    ad::Var loss = ad::mean_all(ad::mul(levels[1], levels[1]));
    tape.backward(loss);
    opt.step(bb.params(), tape);
  }
  CHECK(bb.freeze_report() == before);
}

TEST_CASE("feature cache substitutes the coarse map") {
  const std::string cache = "/tmp/osmid_feature_cache";
  std::filesystem::remove_all(cache);
  std::filesystem::create_directories(cache);

  OpticalConfig cfg;
  cfg.feature_cache_dir = cache;
  OpticalBackbone bb{cfg};
  data::ImageTile tile = synth_tile(8);
  tile.tile_id = "cached-tile";

  auto before = bb.encode_optical(tile);

  TensorFile tf;
  Tensor external = Tensor::full({8, 8, 64}, 0.25);
  tf.put("coarse", external);
  tf.save(cache + "/cached-tile.osten");

  auto after = bb.encode_optical(tile);
  CHECK(before.levels[0].fmap.data != after.levels[0].fmap.data);
  // fine levels unaffected by the cache
  CHECK(before.levels[2].fmap.data == after.levels[2].fmap.data);
}
