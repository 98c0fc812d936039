#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "drpc/tensor.hpp"

namespace drpc {

// Activations of the tapped layers for one forward pass, in layer
// order (earliest tap first).
struct ActivationRecord {
  std::vector<std::pair<std::string, Tensor>> taps;

  const Tensor& get(const std::string& name) const;
  size_t size() const { return taps.size(); }
};

struct ForwardResult {
  Tensor logits;  // [N, numClasses, H, W]
  ActivationRecord acts;
};

// Small FCN-style encoder/decoder. The encoder is a 3x3 stem plus
// `depth` stride-2 stages that double the channel width; the decoder
// scores the coarsest stage with a 1x1 conv and fuses 1x1-scored skip
// connections from the two finer encoder stages before the final
// upsample back to input resolution.
//
// Block order: stem, enc1..encD, head, fuse1, fuse2, logits. The last
// `tapCount` blocks are the consistency taps.
class SegNetwork {
 public:
  struct Config {
    int num_classes = 6;
    int channels_base = 8;
    int depth = 3;
    int tap_count = 5;
    uint64_t seed = 0;
  };

  static SegNetwork build(const Config& cfg);
  static SegNetwork build(int num_classes, int channels_base, int depth, int tap_count,
                          uint64_t seed);

  ForwardResult forward(const Tensor& images) const;  // images [N,3,H,W]

  const Config& config() const { return cfg_; }
  const std::vector<std::string>& layer_names() const { return layer_names_; }
  const std::vector<std::string>& tap_names() const { return tap_names_; }

  std::vector<Tensor>& parameters() { return params_; }
  const std::vector<Tensor>& parameters() const { return params_; }
  const std::vector<std::string>& parameter_names() const { return param_names_; }
  int64_t parameter_count() const;

  // Per-tap (channels, h, w) for an input of the given spatial size.
  std::vector<std::array<int, 3>> tap_shapes(int h, int w) const;

  // Detached read-only copy (for evaluation snapshots).
  SegNetwork snapshot() const;

  void save_checkpoint(const std::filesystem::path& dir,
                       const std::string& config_hash = "") const;
  static SegNetwork load_checkpoint(const std::filesystem::path& dir);

 private:
  SegNetwork() = default;

  Config cfg_;
  std::vector<std::string> layer_names_;
  std::vector<std::string> tap_names_;
  std::vector<std::string> param_names_;
  std::vector<Tensor> params_;  // parallel to param_names_
};

}  // namespace drpc
