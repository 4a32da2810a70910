#pragma once

#include <stdexcept>
#include <string>

#include "osmid/data/tile.hpp"

namespace osmid::data {

struct IoError : std::runtime_error {
  enum class Code { unreadable, empty_image, unsupported_depth };
  Code code;
  IoError(Code c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

// Decodes an 8- or 16-bit raster, rescales to [0,1] and applies the
// modality tag; SAR inputs are collapsed to one channel, optical inputs
// expanded to three.
ImageTile load_tile(const std::string& path, Modality modality);

// 16-bit PNG/TIFF writer (format chosen by extension).
void save_tile(const ImageTile& tile, const std::string& path);

}  // namespace osmid::data
