#include "osmid/features/pyramid.hpp"

#include <stdexcept>

namespace osmid::features {

void FeaturePyramid::validate() const {
  if (levels.size() < 2)
    throw std::invalid_argument("pyramid: needs at least 2 levels");
  for (size_t i = 0; i + 1 < levels.size(); ++i)
    if (levels[i].scale_divisor <= levels[i + 1].scale_divisor)
      throw std::invalid_argument("pyramid: levels must go coarse to fine");
  for (const auto& l : levels)
    if (!l.fmap.all_finite())
      throw std::invalid_argument("pyramid: non-finite feature map");
}

}  // namespace osmid::features
