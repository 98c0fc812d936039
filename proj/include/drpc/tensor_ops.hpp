#pragma once

#include "drpc/tensor.hpp"

namespace drpc {

enum class ResizeMode { kNearest, kBilinear, kArea };

ResizeMode resize_mode_from(const std::string& name);
std::string resize_mode_name(ResizeMode mode);

// 2-d cross-correlation, NCHW. input [N,C,H,W], kernel [F,C,kh,kw],
// bias [F]. Output spatial size floor((H + 2*pad - kh)/stride) + 1.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int stride, int pad);

// Resize [N,C,H,W] to [N,C,outH,outW]. All three modes are linear maps,
// so the backward pass scatters with the forward weights.
//   nearest  — source index floor(i*H/outH); integer upscale replicates blocks
//   bilinear — half-pixel centers, edge-clamped; identity when sizes match
//   area     — mean over the exact (fractionally weighted) covering region
Tensor resize2d(const Tensor& input, int out_h, int out_w, ResizeMode mode);

Tensor relu(const Tensor& input);

// Elementwise; shapes must match exactly (no broadcasting).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor abs(const Tensor& a);  // subgradient 0 at 0

Tensor sum_all(const Tensor& a);   // -> scalar [1]
Tensor mean_all(const Tensor& a);  // -> scalar [1]

// Select sample n of a batch: [N,C,H,W] -> [C,H,W].
Tensor slice_batch(const Tensor& x, int n);

// Mean over non-ignored pixels of -log softmax(logits)[label] per
// image, then mean over the batch. labels hold integer class ids as
// doubles. An image with zero non-ignored pixels is a data error.
Tensor cross_entropy(const Tensor& logits, const Tensor& labels, int ignore_index);

}  // namespace drpc
