#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "drpc/tensor.hpp"

namespace drpc {

// Deterministic label-preserving color/texture transform. A stylizer
// only ever sees the image, never the label map.
struct Stylizer {
  std::string id;
  double hue_deg = 0.0;      // hue rotation in degrees
  double saturation = 1.0;   // HSV saturation factor
  double contrast = 1.0;     // affine around 0.5
  double brightness = 0.0;   // additive offset
  double grayscale = 0.0;    // convex blend toward luminance, in [0,1]
  double noise_amp = 0.0;    // value-noise amplitude, <= 0.1
  uint64_t noise_seed = 0;   // fixed per stylizer

  bool is_identity() const;
};

Stylizer identity_stylizer(const std::string& id = "identity");

// Training stylizers define the auxiliary domains; held-out stylizers
// are reserved for the unseen test domains and the validation stylizer
// for model selection. The three id sets are disjoint.
struct DomainRegistry {
  std::vector<Stylizer> train;
  std::vector<Stylizer> heldout;
  Stylizer validation;

  int k() const { return static_cast<int>(train.size()); }
  void validate() const;
};

// 15 training + 3 held-out domains + 1 validation domain: hue
// rotations around the circle with saturation/contrast/brightness/
// grayscale/noise variation; held-out styles sit between the training
// styles rather than outside them.
DomainRegistry default_registry();

// Output clamped to [0,1]; identity parameters return the input bits
// untouched. Input values outside [0,1] are a data error.
Tensor apply(const Stylizer& stylizer, const Tensor& image);

// One source sample with its K stylized copies and the single shared
// label map.
struct DomainGroup {
  std::vector<Tensor> images;       // images[0] is the source image
  std::vector<std::string> domain_ids;  // parallel to images
  Tensor label;
  std::string sample_id;
};

DomainGroup make_group(const Tensor& image, const Tensor& label, const DomainRegistry& registry);

}  // namespace drpc
