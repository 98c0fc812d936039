#pragma once

#include <array>

#include "drpc/tensor.hpp"

namespace drpc {

// Pooling scales are fixed: 1x1 + 2x2 + 4x4 + 8x8 = 85 bins.
inline constexpr std::array<int, 4> kPyramidScales = {1, 2, 4, 8};
inline constexpr int kPyramidBins = 85;

// Average-pooled pyramid summary of one feature map region. `values`
// is a [C,85] tensor on the same graph as the pooled map; bins are
// concatenated scale-major, row-major within each scale.
struct PyramidVector {
  Tensor values;
  int channels = 0;
  int source_h = 0;
  int source_w = 0;
};

// Crop geometry. Axis-aligned rectangle whose width/height ratio
// matches the image; `rho` is crop height over image height.
struct CropSpec {
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;
  double rho = 1.0;
};

CropSpec full_crop(int h, int w);

// Spatial pyramid pooling of a [C,H,W] map (H,W >= 8). Bin (i,j) of
// scale s averages rows [floor(i*H/s), floor((i+1)*H/s)) x the
// analogous columns; the bins of one scale partition the map.
PyramidVector spp(const Tensor& map);

// Same bin rule applied to the sub-rectangle `crop` (given at feature
// resolution). A full-map crop is bit-identical to spp().
PyramidVector spp_region(const Tensor& map, const CropSpec& crop);

// Convert an image-resolution crop to feature resolution for a
// pure-stride network: boundaries scale by featureH/imageH and round
// to nearest; rho is preserved. imageH must be divisible by featureH.
CropSpec feature_crop(const CropSpec& crop, int image_h, int feature_h);

}  // namespace drpc
