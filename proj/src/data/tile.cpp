#include "osmid/data/tile.hpp"

#include <cmath>
#include <stdexcept>

namespace osmid::data {

void ImageTile::validate() const {
  if (pixels.ndim() != 3) throw std::invalid_argument("tile: pixels must be [H,W,C]");
  const int h = height(), w = width(), c = channels();
  if (h < 64 || w < 64) throw std::invalid_argument("tile: H and W must be >= 64");
  if (h % 16 != 0 || w % 16 != 0)
    throw std::invalid_argument("tile: H and W must be divisible by 16");
  const int expected = modality == Modality::sar ? 1 : 3;
  if (c != expected) throw std::invalid_argument("tile: channel count does not match modality");
  for (double v : pixels.data) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0)
      throw std::invalid_argument("tile: pixels must be finite and within [0,1]");
  }
}

void PairSample::validate() const {
  optical.validate();
  sar.validate();
  if (optical.modality != Modality::optical || sar.modality != Modality::sar)
    throw std::invalid_argument("pair: modality tags wrong");
  if (optical.height() != sar.height() || optical.width() != sar.width())
    throw std::invalid_argument("pair: tiles must share H and W");
  if (!h_gt.invertible()) throw std::invalid_argument("pair: h_gt not invertible");
  if (h_gt.m[8] != 1.0) throw std::invalid_argument("pair: h_gt not normalized");
  double sum = 0.0;
  for (double v : land_use) {
    if (v < 0.0) throw std::invalid_argument("pair: land_use entries must be >= 0");
    sum += v;
  }
  if (std::fabs(sum - 1.0) > 1e-6)
    throw std::invalid_argument("pair: land_use must sum to 1 within 1e-6");
}

}  // namespace osmid::data
