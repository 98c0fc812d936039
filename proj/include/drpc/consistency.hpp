#pragma once

#include <vector>

#include "drpc/pyramid.hpp"
#include "drpc/tensor.hpp"

namespace drpc {

struct LossConfig {
  // Per-tap weights for the cross-domain pyramid term, deepest-but-
  // earliest tap first (same order as the network's tap list).
  std::vector<double> lambdas = {0.2, 0.4, 0.6, 0.8, 1.0};
  double pci_weight = 1.0;
  // Global weight of the consistency regularizer against the
  // segmentation loss.
  double beta = 1.0;
  double rho_min = 0.5;
  double rho_max = 0.9;
  int ignore_index = 255;

  void validate(size_t tap_count) const;
};

// Mean per-image cross-entropy over a batch of logits. Summing this
// over the whole (K+1)-fold augmented set, weighted by batch size, and
// dividing by (K+1)*|D0| yields the augmented-set training objective.
Tensor seg_loss(const Tensor& logits, const Tensor& labels, int ignore_index = 255);

// Cross-domain pyramid consistency at one tap: sum over the K+1
// domains of the per-element mean absolute difference to the
// cross-domain mean pyramid. The mean is a constant target; gradient
// reaches only the individual pyramids.
Tensor pcd_loss(const std::vector<PyramidVector>& pyramids);

// Same loss against an explicit constant target (already detached).
// pcd_loss computes the mean and delegates here; tests use this hook
// to probe the target path in isolation.
Tensor pcd_loss_with_target(const Tensor& target_values,
                            const std::vector<PyramidVector>& pyramids);

// In-image pyramid consistency: per-element mean absolute difference
// between the pooled sub-region of the full image's map (constant
// target) and the pyramid of the rescaled crop's own forward pass.
Tensor pci_loss(const PyramidVector& full_map_pyramid, const PyramidVector& crop_map_pyramid);

// total = seg + beta * (sum_l lambda_l * pcd_l + pciWeight * pci).
// An empty pcd list means the cross-domain term is disabled; an
// undefined pci tensor disables the in-image term. When the list is
// non-empty its length must equal |lambdas|.
Tensor total_loss(const Tensor& seg, const std::vector<Tensor>& pcd_per_tap,
                  const Tensor& pci, const LossConfig& cfg);

}  // namespace drpc
