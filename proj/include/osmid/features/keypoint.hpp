#pragma once

#include <vector>

namespace osmid::features {

struct Keypoint {
  double x = 0.0;  // column, pixel coordinates
  double y = 0.0;  // row
  double score = 0.0;
};

}  // namespace osmid::features
