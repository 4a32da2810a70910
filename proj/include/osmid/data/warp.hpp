#pragma once

#include "osmid/core/tensor.hpp"
#include "osmid/data/geometry.hpp"

namespace osmid::data {

// Backward warp: out(p) = img(dst_to_src * p), bilinear, edge-clamped.
Tensor warp_image(const Tensor& img, const Homography& dst_to_src, int out_h,
                  int out_w);

// Nearest-neighbour variant for label maps ([H,W,1] integer-valued).
Tensor warp_nearest(const Tensor& img, const Homography& dst_to_src, int out_h,
                    int out_w);

// Separable Gaussian blur, reflect padding.
Tensor gaussian_blur(const Tensor& img, double sigma);

// Channel mean of an [H,W,C] image -> [H,W,1].
Tensor luminance(const Tensor& img);

// Sobel gradient magnitude of a single-channel image.
Tensor sobel_magnitude(const Tensor& img);

// Pearson correlation between two equally sized single-channel maps,
// optionally ignoring a border margin.
double pearson_correlation(const Tensor& a, const Tensor& b, int margin = 0);

}  // namespace osmid::data
