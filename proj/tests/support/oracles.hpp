#pragma once

// Independent reference implementations used as test oracles. These
// are deliberately plain nested loops over flat vectors and share no
// code with the library paths they check.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "drpc/rng.hpp"
#include "drpc/tensor.hpp"

namespace oracle {

inline drpc::Tensor rand_tensor(const drpc::Shape& shape, std::mt19937_64& rng, double lo = -1.0,
                                double hi = 1.0) {
  Eigen::ArrayXd values(drpc::shape_size(shape));
  for (int64_t i = 0; i < values.size(); ++i) values[i] = drpc::uniform(rng, lo, hi);
  return drpc::Tensor::from_array(shape, std::move(values));
}

// Direct-summation convolution, NCHW cross-correlation.
inline std::vector<double> conv2d_reference(const std::vector<double>& in, int n, int c, int h,
                                            int w, const std::vector<double>& ker, int f, int kh,
                                            int kw, const std::vector<double>& bias, int stride,
                                            int pad, int& oh, int& ow) {
  oh = (h + 2 * pad - kh) / stride + 1;
  ow = (w + 2 * pad - kw) / stride + 1;
  std::vector<double> out(static_cast<size_t>(n) * f * oh * ow, 0.0);
  for (int ni = 0; ni < n; ++ni) {
    for (int fi = 0; fi < f; ++fi) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          double acc = bias[static_cast<size_t>(fi)];
          for (int ci = 0; ci < c; ++ci) {
            for (int dy = 0; dy < kh; ++dy) {
              for (int dx = 0; dx < kw; ++dx) {
                const int y = oy * stride - pad + dy;
                const int x = ox * stride - pad + dx;
                if (y < 0 || y >= h || x < 0 || x >= w) continue;
                acc += in[((static_cast<size_t>(ni) * c + ci) * h + y) * w + x] *
                       ker[((static_cast<size_t>(fi) * c + ci) * kh + dy) * kw + dx];
              }
            }
          }
          out[((static_cast<size_t>(ni) * f + fi) * oh + oy) * ow + ox] = acc;
        }
      }
    }
  }
  return out;
}

// Block average over an integer-factor grid (area-mode resize oracle).
inline std::vector<double> block_average_reference(const std::vector<double>& in, int h, int w,
                                                   int out_h, int out_w) {
  const int fy = h / out_h, fx = w / out_w;
  std::vector<double> out(static_cast<size_t>(out_h) * out_w, 0.0);
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      double acc = 0.0;
      for (int dy = 0; dy < fy; ++dy) {
        for (int dx = 0; dx < fx; ++dx) {
          acc += in[static_cast<size_t>(oy * fy + dy) * w + (ox * fx + dx)];
        }
      }
      out[static_cast<size_t>(oy) * out_w + ox] = acc / (fy * fx);
    }
  }
  return out;
}

// Pyramid pooling oracle: scales 1,2,4,8, floor-based bin boundaries,
// bins concatenated scale-major / row-major, over the sub-rectangle
// [top, top+rh) x [left, left+rw) of each channel plane.
inline std::vector<double> spp_reference(const std::vector<double>& map, int c, int h, int w,
                                         int top, int left, int rh, int rw) {
  const int scales[4] = {1, 2, 4, 8};
  std::vector<double> out;
  out.reserve(static_cast<size_t>(c) * 85);
  for (int ci = 0; ci < c; ++ci) {
    for (int s : scales) {
      for (int i = 0; i < s; ++i) {
        for (int j = 0; j < s; ++j) {
          const int y0 = top + (i * rh) / s, y1 = top + ((i + 1) * rh) / s;
          const int x0 = left + (j * rw) / s, x1 = left + ((j + 1) * rw) / s;
          double acc = 0.0;
          for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) {
              acc += map[(static_cast<size_t>(ci) * h + y) * w + x];
            }
          }
          out.push_back(acc / (static_cast<double>(y1 - y0) * (x1 - x0)));
        }
      }
    }
  }
  return out;
}

inline double mean_abs_diff_reference(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += std::fabs(a[i] - b[i]);
  return acc / static_cast<double>(a.size());
}

// Scalar Adam recurrence, evaluated independently of the optimizer.
struct AdamScalarRef {
  double m = 0.0, v = 0.0;
  double step(double theta, double g, int64_t t, double lr, double b1, double b2, double eps) {
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mhat = m / (1 - std::pow(b1, static_cast<double>(t)));
    const double vhat = v / (1 - std::pow(b2, static_cast<double>(t)));
    return theta - lr * mhat / (std::sqrt(vhat) + eps);
  }
};

}  // namespace oracle
