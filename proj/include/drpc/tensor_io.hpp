#pragma once

#include <filesystem>
#include <string>

#include "drpc/tensor.hpp"

namespace drpc {

// Binary tensor file: magic "DRPC", u8 version=1, u8 dtype (0 = f64,
// 1 = u8), u8 ndim, ndim little-endian u32 extents, then raw values.
enum class Dtype : uint8_t { kF64 = 0, kU8 = 1 };

// For kU8 every element must be an integer in [0,255].
void save_tensor(const Tensor& t, const std::filesystem::path& path,
                 Dtype dtype = Dtype::kF64);

struct LoadedTensor {
  Tensor tensor;  // detached; u8 payloads come back as exact integer doubles
  Dtype dtype;
};

LoadedTensor load_tensor(const std::filesystem::path& path);

// Binary PPM (P6, maxval 255) from a [3,H,W] tensor with values in [0,1].
void save_ppm(const Tensor& rgb, const std::filesystem::path& path);

}  // namespace drpc
