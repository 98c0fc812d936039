#include "drpc/pyramid.hpp"

#include <cmath>

namespace drpc {

using detail::TensorImpl;
using detail::make_op;

CropSpec full_crop(int h, int w) { return CropSpec{0, 0, h, w, 1.0}; }

namespace {

int scale_offset(int scale_index) {
  int off = 0;
  for (int i = 0; i < scale_index; ++i) off += kPyramidScales[static_cast<size_t>(i)] *
                                               kPyramidScales[static_cast<size_t>(i)];
  return off;
}

PyramidVector pool_region(const Tensor& map, const CropSpec& crop, const char* op) {
  if (map.ndim() != 3) {
    throw DimensionError(std::string(op) + ": map must be [C,H,W], got " +
                         shape_str(map.shape()));
  }
  const int c = map.dim(0), h = map.dim(1), w = map.dim(2);
  if (crop.top < 0 || crop.left < 0 || crop.height < 1 || crop.width < 1 ||
      crop.top + crop.height > h || crop.left + crop.width > w) {
    throw GeometryError(std::string(op) + ": crop [" + std::to_string(crop.top) + "," +
                        std::to_string(crop.left) + " " + std::to_string(crop.height) + "x" +
                        std::to_string(crop.width) + "] outside map " + shape_str(map.shape()));
  }
  if (crop.height < 8 || crop.width < 8) {
    throw DimensionError(std::string(op) + ": pooled region must be at least 8x8, got " +
                         std::to_string(crop.height) + "x" + std::to_string(crop.width));
  }

  const int rh = crop.height, rw = crop.width, top = crop.top, left = crop.left;
  auto forward = [=](TensorImpl& self) {
    const double* in = self.parents[0]->data.data();
    double* out = self.data.data();
    const int64_t plane = static_cast<int64_t>(h) * w;
    for (int ch = 0; ch < c; ++ch) {
      const double* src = in + ch * plane;
      double* dst = out + static_cast<int64_t>(ch) * kPyramidBins;
      for (size_t si = 0; si < kPyramidScales.size(); ++si) {
        const int s = kPyramidScales[si];
        const int base = scale_offset(static_cast<int>(si));
        for (int i = 0; i < s; ++i) {
          const int y0 = top + static_cast<int>((static_cast<int64_t>(i) * rh) / s);
          const int y1 = top + static_cast<int>((static_cast<int64_t>(i + 1) * rh) / s);
          for (int j = 0; j < s; ++j) {
            const int x0 = left + static_cast<int>((static_cast<int64_t>(j) * rw) / s);
            const int x1 = left + static_cast<int>((static_cast<int64_t>(j + 1) * rw) / s);
            double acc = 0.0;
            for (int y = y0; y < y1; ++y) {
              const double* row = src + static_cast<int64_t>(y) * w;
              for (int x = x0; x < x1; ++x) acc += row[x];
            }
            dst[base + i * s + j] = acc / (static_cast<double>(y1 - y0) * (x1 - x0));
          }
        }
      }
    }
  };

  auto backward = [=](TensorImpl& self) {
    TensorImpl& in = *self.parents[0];
    if (!in.needs_grad) return;
    double* din = in.ensure_grad().data();
    const double* g = self.grad->data();
    const int64_t plane = static_cast<int64_t>(h) * w;
    for (int ch = 0; ch < c; ++ch) {
      double* dst = din + ch * plane;
      const double* src = g + static_cast<int64_t>(ch) * kPyramidBins;
      for (size_t si = 0; si < kPyramidScales.size(); ++si) {
        const int s = kPyramidScales[si];
        const int base = scale_offset(static_cast<int>(si));
        for (int i = 0; i < s; ++i) {
          const int y0 = top + static_cast<int>((static_cast<int64_t>(i) * rh) / s);
          const int y1 = top + static_cast<int>((static_cast<int64_t>(i + 1) * rh) / s);
          for (int j = 0; j < s; ++j) {
            const int x0 = left + static_cast<int>((static_cast<int64_t>(j) * rw) / s);
            const int x1 = left + static_cast<int>((static_cast<int64_t>(j + 1) * rw) / s);
            const double gb = src[base + i * s + j] /
                              (static_cast<double>(y1 - y0) * (x1 - x0));
            for (int y = y0; y < y1; ++y) {
              double* row = dst + static_cast<int64_t>(y) * w;
              for (int x = x0; x < x1; ++x) row[x] += gb;
            }
          }
        }
      }
    }
  };

  PyramidVector pv;
  pv.values = make_op(op, {c, kPyramidBins}, {map}, std::move(forward), std::move(backward));
  pv.channels = c;
  pv.source_h = rh;
  pv.source_w = rw;
  return pv;
}

}  // namespace

PyramidVector spp(const Tensor& map) {
  if (map.ndim() != 3) {
    throw DimensionError("spp: map must be [C,H,W], got " + shape_str(map.shape()));
  }
  return pool_region(map, full_crop(map.dim(1), map.dim(2)), "spp");
}

PyramidVector spp_region(const Tensor& map, const CropSpec& crop) {
  return pool_region(map, crop, "spp_region");
}

CropSpec feature_crop(const CropSpec& crop, int image_h, int feature_h) {
  if (image_h < 1 || feature_h < 1 || image_h % feature_h != 0) {
    throw ContractViolation("feature_crop: image height " + std::to_string(image_h) +
                            " must be a positive multiple of feature height " +
                            std::to_string(feature_h));
  }
  const double f = static_cast<double>(feature_h) / image_h;
  CropSpec out;
  out.top = static_cast<int>(std::lround(crop.top * f));
  out.left = static_cast<int>(std::lround(crop.left * f));
  out.height = static_cast<int>(std::lround(crop.height * f));
  out.width = static_cast<int>(std::lround(crop.width * f));
  out.rho = crop.rho;
  if (out.height < 8 || out.width < 8) {
    throw GeometryError("feature_crop: crop maps to " + std::to_string(out.height) + "x" +
                        std::to_string(out.width) +
                        " cells at feature resolution; raise the minimum crop ratio so the "
                        "pooled region keeps at least 8 cells per axis");
  }
  return out;
}

}  // namespace drpc
