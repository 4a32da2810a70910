#include "osmid/data/raster_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>

namespace osmid::data {

ImageTile load_tile(const std::string& path, Modality modality) {
  cv::Mat raw = cv::imread(path, cv::IMREAD_UNCHANGED);
  if (raw.data == nullptr)
    throw IoError(IoError::Code::unreadable, "load_tile: cannot decode " + path);
  if (raw.rows == 0 || raw.cols == 0)
    throw IoError(IoError::Code::empty_image, "load_tile: zero-sized image " + path);

  double maxval = 0.0;
  switch (raw.depth()) {
    case CV_8U:
      maxval = 255.0;
      break;
    case CV_16U:
      maxval = 65535.0;
      break;
    default:
      throw IoError(IoError::Code::unsupported_depth,
                    "load_tile: unsupported bit depth in " + path);
  }

  cv::Mat img;
  raw.convertTo(img, CV_64F, 1.0 / maxval);
  if (img.channels() == 4) {
    cv::cvtColor(img, img, cv::COLOR_BGRA2BGR);
  }

  const int h = img.rows, w = img.cols;
  ImageTile tile;
  tile.modality = modality;
  tile.tile_id = path;

  if (modality == Modality::sar) {
    tile.pixels = Tensor({h, w, 1});
    if (img.channels() == 1) {
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) tile.pixels.at3(y, x, 0) = img.at<double>(y, x);
    } else {
      // multi-channel SAR input: collapse via channel average
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const auto& px = img.at<cv::Vec3d>(y, x);
          tile.pixels.at3(y, x, 0) = (px[0] + px[1] + px[2]) / 3.0;
        }
    }
  } else {
    tile.pixels = Tensor({h, w, 3});
    if (img.channels() == 1) {
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double v = img.at<double>(y, x);
          for (int c = 0; c < 3; ++c) tile.pixels.at3(y, x, c) = v;
        }
    } else {
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const auto& px = img.at<cv::Vec3d>(y, x);  // BGR
          tile.pixels.at3(y, x, 0) = px[2];
          tile.pixels.at3(y, x, 1) = px[1];
          tile.pixels.at3(y, x, 2) = px[0];
        }
    }
  }
  for (double& v : tile.pixels.data) v = std::clamp(v, 0.0, 1.0);
  return tile;
}

void save_tile(const ImageTile& tile, const std::string& path) {
  const int h = tile.height(), w = tile.width(), c = tile.channels();
  cv::Mat img;
  if (c == 1) {
    img.create(h, w, CV_16UC1);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        img.at<uint16_t>(y, x) = static_cast<uint16_t>(
            std::lround(std::clamp(tile.pixels.at3(y, x, 0), 0.0, 1.0) * 65535.0));
  } else {
    img.create(h, w, CV_16UC3);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        auto& px = img.at<cv::Vec3w>(y, x);  // BGR order
        px[0] = static_cast<uint16_t>(std::lround(std::clamp(tile.pixels.at3(y, x, 2), 0.0, 1.0) * 65535.0));
        px[1] = static_cast<uint16_t>(std::lround(std::clamp(tile.pixels.at3(y, x, 1), 0.0, 1.0) * 65535.0));
        px[2] = static_cast<uint16_t>(std::lround(std::clamp(tile.pixels.at3(y, x, 0), 0.0, 1.0) * 65535.0));
      }
  }
  if (!cv::imwrite(path, img))
    throw IoError(IoError::Code::unreadable, "save_tile: cannot write " + path);
}

}  // namespace osmid::data
