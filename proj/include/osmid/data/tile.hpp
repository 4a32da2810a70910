#pragma once

#include <array>
#include <string>

#include "osmid/core/tensor.hpp"
#include "osmid/data/geometry.hpp"
#include "osmid/prompt/prompt.hpp"

namespace osmid::data {

enum class Modality { optical, sar };

inline const char* modality_name(Modality m) {
  return m == Modality::optical ? "optical" : "sar";
}

struct ImageTile {
  Tensor pixels;  // [H,W,C], values in [0,1]; C=1 for SAR, C=3 for optical
  Modality modality = Modality::optical;
  std::string tile_id;

  int height() const { return pixels.dim(0); }
  int width() const { return pixels.dim(1); }
  int channels() const { return pixels.dim(2); }

  // Enforces the tile contract: finite pixels in [0,1], H,W >= 64 and
  // divisible by 16, channel count matching the modality.
  void validate() const;
};

struct PairSample {
  ImageTile optical;
  ImageTile sar;
  Homography h_gt;  // maps optical-frame points into the SAR frame
  std::array<double, prompt::kNumClasses> land_use{};
  prompt::PromptSpec prompt;

  void validate() const;
};

}  // namespace osmid::data
