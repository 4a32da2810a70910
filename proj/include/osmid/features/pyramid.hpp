#pragma once

#include <vector>

#include "osmid/core/tensor.hpp"
#include "osmid/data/tile.hpp"

namespace osmid::features {

struct PyramidLevel {
  int scale_divisor = 1;
  Tensor fmap;  // [H/s, W/s, C]
};

// Ordered coarse (largest divisor) to fine (divisor 1), at least two
// levels, all maps finite.
struct FeaturePyramid {
  std::vector<PyramidLevel> levels;
  data::Modality source = data::Modality::optical;

  void validate() const;
};

}  // namespace osmid::features
