#include "drpc/tensor_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

namespace drpc {

static constexpr char kMagic[4] = {'D', 'R', 'P', 'C'};
static constexpr uint8_t kVersion = 1;

static void put_u32le(std::ostream& os, uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

static uint32_t get_u32le(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

static void put_f64le(std::ostream& os, double v) {
  uint64_t u;
  std::memcpy(&u, &v, 8);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((u >> (8 * i)) & 0xff);
  os.write(b, 8);
}

static double get_f64le(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

void save_tensor(const Tensor& t, const std::filesystem::path& path, Dtype dtype) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path.string());
  os.write(kMagic, 4);
  os.put(static_cast<char>(kVersion));
  os.put(static_cast<char>(dtype));
  os.put(static_cast<char>(t.ndim()));
  for (int i = 0; i < t.ndim(); ++i) put_u32le(os, static_cast<uint32_t>(t.dim(i)));
  const double* d = t.data();
  const int64_t n = t.size();
  if (dtype == Dtype::kF64) {
    for (int64_t i = 0; i < n; ++i) put_f64le(os, d[i]);
  } else {
    std::vector<char> bytes(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
      const double v = d[i];
      if (v < 0.0 || v > 255.0 || v != std::floor(v)) {
        throw DataError("u8 tensor file requires integers in [0,255], got " +
                        std::to_string(v) + " at flat index " + std::to_string(i));
      }
      bytes[static_cast<size_t>(i)] = static_cast<char>(static_cast<uint8_t>(v));
    }
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  if (!os) throw IoError("write failed: " + path.string());
}

LoadedTensor load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError("bad magic in tensor file: " + path.string());
  }
  const int version = is.get();
  if (version != kVersion) {
    throw IoError("unsupported tensor file version " + std::to_string(version) + ": " +
                  path.string());
  }
  const int dtype_raw = is.get();
  if (dtype_raw != 0 && dtype_raw != 1) {
    throw IoError("unknown dtype " + std::to_string(dtype_raw) + ": " + path.string());
  }
  const int ndim = is.get();
  Shape shape(static_cast<size_t>(ndim));
  for (int i = 0; i < ndim; ++i) shape[static_cast<size_t>(i)] = static_cast<int>(get_u32le(is));
  const int64_t n = shape_size(shape);
  Eigen::ArrayXd data(n);
  if (dtype_raw == 0) {
    for (int64_t i = 0; i < n; ++i) data[i] = get_f64le(is);
  } else {
    std::vector<unsigned char> bytes(static_cast<size_t>(n));
    is.read(reinterpret_cast<char*>(bytes.data()), n);
    for (int64_t i = 0; i < n; ++i) data[i] = static_cast<double>(bytes[static_cast<size_t>(i)]);
  }
  if (!is) throw IoError("truncated tensor file: " + path.string());
  return {Tensor::from_array(shape, std::move(data)), static_cast<Dtype>(dtype_raw)};
}

void save_ppm(const Tensor& rgb, const std::filesystem::path& path) {
  if (rgb.ndim() != 3 || rgb.dim(0) != 3) {
    throw DimensionError("save_ppm expects a [3,H,W] tensor, got " + shape_str(rgb.shape()));
  }
  const int h = rgb.dim(1), w = rgb.dim(2);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path.string());
  os << "P6\n" << w << " " << h << "\n255\n";
  const double* d = rgb.data();
  const int64_t plane = static_cast<int64_t>(h) * w;
  std::vector<char> row(static_cast<size_t>(w) * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        double v = d[c * plane + y * static_cast<int64_t>(w) + x];
        v = std::min(1.0, std::max(0.0, v));
        row[static_cast<size_t>(x) * 3 + static_cast<size_t>(c)] =
            static_cast<char>(static_cast<uint8_t>(std::lround(v * 255.0)));
      }
    }
    os.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
  if (!os) throw IoError("write failed: " + path.string());
}

}  // namespace drpc
