#include "drpc/tensor_ops.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <utility>

namespace drpc {

using detail::TensorImpl;
using detail::make_op;

using RowMajorMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<Eigen::MatrixXd>;
using ConstMatMap = Eigen::Map<const Eigen::MatrixXd>;
using RowMap = Eigen::Map<RowMajorMat>;
using ConstRowMap = Eigen::Map<const RowMajorMat>;

ResizeMode resize_mode_from(const std::string& name) {
  if (name == "nearest") return ResizeMode::kNearest;
  if (name == "bilinear") return ResizeMode::kBilinear;
  if (name == "area") return ResizeMode::kArea;
  throw ConfigError("unknown resize mode '" + name + "'");
}

std::string resize_mode_name(ResizeMode mode) {
  switch (mode) {
    case ResizeMode::kNearest: return "nearest";
    case ResizeMode::kBilinear: return "bilinear";
    case ResizeMode::kArea: return "area";
  }
  return "?";
}

static void check_rank(const Tensor& t, int rank, const char* op, const char* arg) {
  if (t.ndim() != rank) {
    throw DimensionError(std::string(op) + ": " + arg + " must have rank " +
                         std::to_string(rank) + ", got " + shape_str(t.shape()));
  }
}

// ---------------------------------------------------------------------------
// conv2d: batched im2col + one GEMM per direction.

namespace {

struct ConvGeom {
  int n, c, h, w;
  int f, kh, kw;
  int stride, pad;
  int oh, ow;
  int64_t ckk() const { return static_cast<int64_t>(c) * kh * kw; }
  int64_t cols() const { return static_cast<int64_t>(n) * oh * ow; }
};

void im2col(const double* in, const ConvGeom& g, Eigen::MatrixXd& col) {
  col.setZero(g.ckk(), g.cols());
  const int64_t plane = static_cast<int64_t>(g.h) * g.w;
  for (int n = 0; n < g.n; ++n) {
    const double* img = in + static_cast<int64_t>(n) * g.c * plane;
    for (int oy = 0; oy < g.oh; ++oy) {
      for (int ox = 0; ox < g.ow; ++ox) {
        double* dst = col.col(static_cast<int64_t>(n) * g.oh * g.ow +
                              static_cast<int64_t>(oy) * g.ow + ox)
                          .data();
        const int y0 = oy * g.stride - g.pad;
        const int x0 = ox * g.stride - g.pad;
        int64_t r = 0;
        for (int c = 0; c < g.c; ++c) {
          const double* chan = img + static_cast<int64_t>(c) * plane;
          for (int dy = 0; dy < g.kh; ++dy) {
            const int y = y0 + dy;
            if (y < 0 || y >= g.h) {
              r += g.kw;
              continue;
            }
            const double* row = chan + static_cast<int64_t>(y) * g.w;
            for (int dx = 0; dx < g.kw; ++dx, ++r) {
              const int x = x0 + dx;
              if (x >= 0 && x < g.w) dst[r] = row[x];
            }
          }
        }
      }
    }
  }
}

void col2im_add(const Eigen::MatrixXd& col, const ConvGeom& g, double* din) {
  const int64_t plane = static_cast<int64_t>(g.h) * g.w;
  for (int n = 0; n < g.n; ++n) {
    double* img = din + static_cast<int64_t>(n) * g.c * plane;
    for (int oy = 0; oy < g.oh; ++oy) {
      for (int ox = 0; ox < g.ow; ++ox) {
        const double* src = col.col(static_cast<int64_t>(n) * g.oh * g.ow +
                                    static_cast<int64_t>(oy) * g.ow + ox)
                                .data();
        const int y0 = oy * g.stride - g.pad;
        const int x0 = ox * g.stride - g.pad;
        int64_t r = 0;
        for (int c = 0; c < g.c; ++c) {
          double* chan = img + static_cast<int64_t>(c) * plane;
          for (int dy = 0; dy < g.kh; ++dy) {
            const int y = y0 + dy;
            if (y < 0 || y >= g.h) {
              r += g.kw;
              continue;
            }
            double* row = chan + static_cast<int64_t>(y) * g.w;
            for (int dx = 0; dx < g.kw; ++dx, ++r) {
              const int x = x0 + dx;
              if (x >= 0 && x < g.w) row[x] += src[r];
            }
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int stride, int pad) {
  check_rank(input, 4, "conv2d", "input");
  check_rank(kernel, 4, "conv2d", "kernel");
  check_rank(bias, 1, "conv2d", "bias");
  if (stride < 1) throw ContractViolation("conv2d: stride must be >= 1");
  if (pad < 0) throw ContractViolation("conv2d: pad must be >= 0");

  ConvGeom g;
  g.n = input.dim(0);
  g.c = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.f = kernel.dim(0);
  g.kh = kernel.dim(2);
  g.kw = kernel.dim(3);
  g.stride = stride;
  g.pad = pad;
  if (kernel.dim(1) != g.c) {
    throw DimensionError("conv2d: kernel channel axis is " + std::to_string(kernel.dim(1)) +
                         " but input channel axis is " + std::to_string(g.c));
  }
  if (bias.dim(0) != g.f) {
    throw DimensionError("conv2d: bias axis is " + std::to_string(bias.dim(0)) +
                         " but kernel filter axis is " + std::to_string(g.f));
  }
  if (g.kh > g.h + 2 * pad || g.kw > g.w + 2 * pad) {
    throw DimensionError("conv2d: kernel " + std::to_string(g.kh) + "x" + std::to_string(g.kw) +
                         " exceeds padded input on the spatial axes");
  }
  g.oh = (g.h + 2 * pad - g.kh) / stride + 1;
  g.ow = (g.w + 2 * pad - g.kw) / stride + 1;

  auto forward = [g](TensorImpl& self) {
    const TensorImpl& in = *self.parents[0];
    const TensorImpl& ker = *self.parents[1];
    const TensorImpl& b = *self.parents[2];
    Eigen::MatrixXd col;
    im2col(in.data.data(), g, col);
    ConstRowMap wmat(ker.data.data(), g.f, g.ckk());
    Eigen::MatrixXd out = wmat * col;  // f x (n*oh*ow)
    const int64_t ohw = static_cast<int64_t>(g.oh) * g.ow;
    for (int n = 0; n < g.n; ++n) {
      for (int f = 0; f < g.f; ++f) {
        double* dst = self.data.data() + (static_cast<int64_t>(n) * g.f + f) * ohw;
        const double bf = b.data[f];
        for (int64_t p = 0; p < ohw; ++p) dst[p] = out(f, n * ohw + p) + bf;
      }
    }
  };

  auto backward = [g](TensorImpl& self) {
    TensorImpl& in = *self.parents[0];
    TensorImpl& ker = *self.parents[1];
    TensorImpl& b = *self.parents[2];
    const int64_t ohw = static_cast<int64_t>(g.oh) * g.ow;
    Eigen::MatrixXd dout(g.f, g.cols());
    for (int n = 0; n < g.n; ++n) {
      for (int f = 0; f < g.f; ++f) {
        const double* src = self.grad->data() + (static_cast<int64_t>(n) * g.f + f) * ohw;
        for (int64_t p = 0; p < ohw; ++p) dout(f, n * ohw + p) = src[p];
      }
    }
    if (b.needs_grad) {
      Eigen::Map<Eigen::VectorXd>(b.ensure_grad().data(), g.f) += dout.rowwise().sum();
    }
    if (ker.needs_grad) {
      Eigen::MatrixXd col;
      im2col(in.data.data(), g, col);
      RowMap dw(ker.ensure_grad().data(), g.f, g.ckk());
      dw.noalias() += dout * col.transpose();
    }
    if (in.needs_grad) {
      ConstRowMap wmat(ker.data.data(), g.f, g.ckk());
      Eigen::MatrixXd dcol = wmat.transpose() * dout;
      col2im_add(dcol, g, in.ensure_grad().data());
    }
  };

  return make_op("conv2d", {g.n, g.f, g.oh, g.ow}, {input, kernel, bias},
                 std::move(forward), std::move(backward));
}

// ---------------------------------------------------------------------------
// resize2d: separable per-axis weight tables shared by forward/backward.

namespace {

struct AxisTap {
  int src;
  double weight;
};

std::vector<std::vector<AxisTap>> axis_taps(int in_len, int out_len, ResizeMode mode) {
  std::vector<std::vector<AxisTap>> taps(static_cast<size_t>(out_len));
  switch (mode) {
    case ResizeMode::kNearest:
      for (int o = 0; o < out_len; ++o) {
        const int s = static_cast<int>((static_cast<int64_t>(o) * in_len) / out_len);
        taps[o] = {{s, 1.0}};
      }
      break;
    case ResizeMode::kBilinear:
      for (int o = 0; o < out_len; ++o) {
        double src = (o + 0.5) * static_cast<double>(in_len) / out_len - 0.5;
        if (src < 0.0) src = 0.0;
        if (src > in_len - 1) src = in_len - 1;
        const int lo = static_cast<int>(std::floor(src));
        const double f = src - lo;
        const int hi = std::min(lo + 1, in_len - 1);
        taps[o] = {{lo, 1.0 - f}, {hi, f}};
      }
      break;
    case ResizeMode::kArea:
      for (int o = 0; o < out_len; ++o) {
        const double cell = static_cast<double>(in_len) / out_len;
        const double start = o * cell;
        const double end = (o + 1) * cell;
        std::vector<AxisTap> t;
        for (int s = static_cast<int>(std::floor(start)); s < in_len && s < end; ++s) {
          const double overlap = std::min(end, static_cast<double>(s + 1)) -
                                 std::max(start, static_cast<double>(s));
          if (overlap > 0.0) t.push_back({s, overlap / cell});
        }
        taps[o] = std::move(t);
      }
      break;
  }
  return taps;
}

}  // namespace

Tensor resize2d(const Tensor& input, int out_h, int out_w, ResizeMode mode) {
  check_rank(input, 4, "resize2d", "input");
  if (out_h < 1 || out_w < 1) throw ContractViolation("resize2d: output extents must be >= 1");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const auto ytaps = axis_taps(h, out_h, mode);
  const auto xtaps = axis_taps(w, out_w, mode);

  auto forward = [=](TensorImpl& self) {
    const double* in = self.parents[0]->data.data();
    double* out = self.data.data();
    const int64_t planes = static_cast<int64_t>(n) * c;
    for (int64_t p = 0; p < planes; ++p) {
      const double* src = in + p * h * w;
      double* dst = out + p * static_cast<int64_t>(out_h) * out_w;
      for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox) {
          double acc = 0.0;
          for (const AxisTap& ty : ytaps[oy]) {
            const double* row = src + static_cast<int64_t>(ty.src) * w;
            double racc = 0.0;
            for (const AxisTap& tx : xtaps[ox]) racc += tx.weight * row[tx.src];
            acc += ty.weight * racc;
          }
          dst[static_cast<int64_t>(oy) * out_w + ox] = acc;
        }
      }
    }
  };

  auto backward = [=](TensorImpl& self) {
    TensorImpl& in = *self.parents[0];
    if (!in.needs_grad) return;
    double* din = in.ensure_grad().data();
    const double* g = self.grad->data();
    const int64_t planes = static_cast<int64_t>(n) * c;
    for (int64_t p = 0; p < planes; ++p) {
      double* dst = din + p * h * w;
      const double* src = g + p * static_cast<int64_t>(out_h) * out_w;
      for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox) {
          const double go = src[static_cast<int64_t>(oy) * out_w + ox];
          for (const AxisTap& ty : ytaps[oy]) {
            double* row = dst + static_cast<int64_t>(ty.src) * w;
            const double wy = ty.weight * go;
            for (const AxisTap& tx : xtaps[ox]) row[tx.src] += tx.weight * wy;
          }
        }
      }
    }
  };

  return make_op("resize2d_" + resize_mode_name(mode), {n, c, out_h, out_w}, {input},
                 std::move(forward), std::move(backward));
}

// ---------------------------------------------------------------------------
// Elementwise ops.

Tensor relu(const Tensor& input) {
  return make_op(
      "relu", input.shape(), {input},
      [](TensorImpl& self) { self.data = self.parents[0]->data.cwiseMax(0.0); },
      [](TensorImpl& self) {
        TensorImpl& in = *self.parents[0];
        if (!in.needs_grad) return;
        in.ensure_grad() += (in.data > 0.0).cast<double>() * *self.grad;
      });
}

static void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!same_shape(a.shape(), b.shape())) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  return make_op(
      "add", a.shape(), {a, b},
      [](TensorImpl& self) { self.data = self.parents[0]->data + self.parents[1]->data; },
      [](TensorImpl& self) {
        for (auto& p : self.parents) {
          if (p->needs_grad) p->ensure_grad() += *self.grad;
        }
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  return make_op(
      "sub", a.shape(), {a, b},
      [](TensorImpl& self) { self.data = self.parents[0]->data - self.parents[1]->data; },
      [](TensorImpl& self) {
        if (self.parents[0]->needs_grad) self.parents[0]->ensure_grad() += *self.grad;
        if (self.parents[1]->needs_grad) self.parents[1]->ensure_grad() -= *self.grad;
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  return make_op(
      "mul", a.shape(), {a, b},
      [](TensorImpl& self) { self.data = self.parents[0]->data * self.parents[1]->data; },
      [](TensorImpl& self) {
        TensorImpl& pa = *self.parents[0];
        TensorImpl& pb = *self.parents[1];
        if (pa.needs_grad) pa.ensure_grad() += pb.data * *self.grad;
        if (pb.needs_grad) pb.ensure_grad() += pa.data * *self.grad;
      });
}

Tensor scale(const Tensor& a, double factor) {
  return make_op(
      "scale", a.shape(), {a},
      [factor](TensorImpl& self) { self.data = self.parents[0]->data * factor; },
      [factor](TensorImpl& self) {
        TensorImpl& in = *self.parents[0];
        if (in.needs_grad) in.ensure_grad() += factor * *self.grad;
      });
}

Tensor abs(const Tensor& a) {
  return make_op(
      "abs", a.shape(), {a},
      [](TensorImpl& self) { self.data = self.parents[0]->data.abs(); },
      [](TensorImpl& self) {
        TensorImpl& in = *self.parents[0];
        if (!in.needs_grad) return;
        in.ensure_grad() += in.data.sign() * *self.grad;
      });
}

Tensor sum_all(const Tensor& a) {
  return make_op(
      "sum_all", {1}, {a},
      [](TensorImpl& self) { self.data[0] = self.parents[0]->data.sum(); },
      [](TensorImpl& self) {
        TensorImpl& in = *self.parents[0];
        if (in.needs_grad) in.ensure_grad() += (*self.grad)[0];
      });
}

Tensor mean_all(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.size());
  return make_op(
      "mean_all", {1}, {a},
      [inv](TensorImpl& self) { self.data[0] = self.parents[0]->data.sum() * inv; },
      [inv](TensorImpl& self) {
        TensorImpl& in = *self.parents[0];
        if (in.needs_grad) in.ensure_grad() += (*self.grad)[0] * inv;
      });
}

Tensor slice_batch(const Tensor& x, int n) {
  check_rank(x, 4, "slice_batch", "input");
  if (n < 0 || n >= x.dim(0)) {
    throw DimensionError("slice_batch: index " + std::to_string(n) +
                         " out of range for batch axis " + std::to_string(x.dim(0)));
  }
  const int64_t len = x.size() / x.dim(0);
  const int64_t off = static_cast<int64_t>(n) * len;
  return make_op(
      "slice_batch", {x.dim(1), x.dim(2), x.dim(3)}, {x},
      [off, len](TensorImpl& self) { self.data = self.parents[0]->data.segment(off, len); },
      [off, len](TensorImpl& self) {
        TensorImpl& in = *self.parents[0];
        if (in.needs_grad) in.ensure_grad().segment(off, len) += *self.grad;
      });
}

// ---------------------------------------------------------------------------
// cross_entropy.

Tensor cross_entropy(const Tensor& logits, const Tensor& labels, int ignore_index) {
  check_rank(logits, 4, "cross_entropy", "logits");
  check_rank(labels, 3, "cross_entropy", "labels");
  const int n = logits.dim(0), k = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  if (labels.dim(0) != n || labels.dim(1) != h || labels.dim(2) != w) {
    throw DimensionError("cross_entropy: labels " + shape_str(labels.shape()) +
                         " do not match logits " + shape_str(logits.shape()));
  }

  // Per-image non-ignored pixel counts, filled during forward and
  // reused by backward for the normalization.
  auto counts = std::make_shared<std::vector<int64_t>>();

  auto forward = [=](TensorImpl& self) {
    const double* lg = self.parents[0]->data.data();
    const double* lb = self.parents[1]->data.data();
    const int64_t hw = static_cast<int64_t>(h) * w;
    counts->assign(static_cast<size_t>(n), 0);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      const double* img = lg + static_cast<int64_t>(i) * k * hw;
      double img_sum = 0.0;
      int64_t cnt = 0;
      for (int64_t p = 0; p < hw; ++p) {
        const long id = std::lround(lb[i * hw + p]);
        if (id == ignore_index) continue;
        if (id < 0 || id >= k) {
          throw DataError("cross_entropy: label " + std::to_string(id) + " at (n=" +
                          std::to_string(i) + ",y=" + std::to_string(p / w) + ",x=" +
                          std::to_string(p % w) + ") outside [0," + std::to_string(k) + ")");
        }
        double m = img[p];
        for (int c = 1; c < k; ++c) m = std::max(m, img[c * hw + p]);
        double lse = 0.0;
        for (int c = 0; c < k; ++c) lse += std::exp(img[c * hw + p] - m);
        lse = m + std::log(lse);
        img_sum += lse - img[id * hw + p];
        ++cnt;
      }
      if (cnt == 0) {
        throw DataError("cross_entropy: image " + std::to_string(i) +
                        " has no non-ignored pixels");
      }
      (*counts)[static_cast<size_t>(i)] = cnt;
      total += img_sum / static_cast<double>(cnt);
    }
    self.data[0] = total / n;
  };

  auto backward = [=](TensorImpl& self) {
    TensorImpl& lgi = *self.parents[0];
    if (!lgi.needs_grad) return;
    const double* lg = lgi.data.data();
    const double* lb = self.parents[1]->data.data();
    double* dl = lgi.ensure_grad().data();
    const double g = (*self.grad)[0];
    const int64_t hw = static_cast<int64_t>(h) * w;
    std::vector<double> smax(static_cast<size_t>(k));
    for (int i = 0; i < n; ++i) {
      const double* img = lg + static_cast<int64_t>(i) * k * hw;
      double* dimg = dl + static_cast<int64_t>(i) * k * hw;
      const double norm = g / (static_cast<double>((*counts)[static_cast<size_t>(i)]) * n);
      for (int64_t p = 0; p < hw; ++p) {
        const long id = std::lround(lb[i * hw + p]);
        if (id == ignore_index) continue;
        double m = img[p];
        for (int c = 1; c < k; ++c) m = std::max(m, img[c * hw + p]);
        double z = 0.0;
        for (int c = 0; c < k; ++c) {
          smax[static_cast<size_t>(c)] = std::exp(img[c * hw + p] - m);
          z += smax[static_cast<size_t>(c)];
        }
        for (int c = 0; c < k; ++c) {
          const double soft = smax[static_cast<size_t>(c)] / z;
          dimg[c * hw + p] += norm * (soft - (c == id ? 1.0 : 0.0));
        }
      }
    }
  };

  return make_op("cross_entropy", {1}, {logits, labels}, std::move(forward),
                 std::move(backward));
}

}  // namespace drpc
