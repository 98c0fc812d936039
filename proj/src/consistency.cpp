#include "drpc/consistency.hpp"

#include "drpc/tensor_ops.hpp"

namespace drpc {

void LossConfig::validate(size_t tap_count) const {
  if (lambdas.size() != tap_count) {
    throw ConfigError("loss config has " + std::to_string(lambdas.size()) +
                      " lambdas for " + std::to_string(tap_count) + " taps");
  }
  for (double l : lambdas) {
    if (l < 0.0) throw ConfigError("lambda weights must be >= 0");
  }
  if (rho_min <= 0.0 || rho_min > rho_max || rho_max > 1.0) {
    throw ConfigError("crop ratio range must satisfy 0 < rhoMin <= rhoMax <= 1");
  }
  if (pci_weight < 0.0 || beta < 0.0) {
    throw ConfigError("pciWeight and beta must be >= 0");
  }
}

Tensor seg_loss(const Tensor& logits, const Tensor& labels, int ignore_index) {
  return cross_entropy(logits, labels, ignore_index);
}

Tensor pcd_loss(const std::vector<PyramidVector>& pyramids) {
  if (pyramids.empty()) throw ContractViolation("pcd_loss: empty pyramid list");
  const Shape& shape = pyramids.front().values.shape();
  Eigen::ArrayXd mean = Eigen::ArrayXd::Zero(pyramids.front().values.size());
  for (const PyramidVector& p : pyramids) {
    if (!same_shape(p.values.shape(), shape)) {
      throw ContractViolation("pcd_loss: pyramid shape " + shape_str(p.values.shape()) +
                              " differs from " + shape_str(shape));
    }
    mean += p.values.array();
  }
  mean /= static_cast<double>(pyramids.size());
  return pcd_loss_with_target(Tensor::from_array(shape, std::move(mean)), pyramids);
}

Tensor pcd_loss_with_target(const Tensor& target_values,
                            const std::vector<PyramidVector>& pyramids) {
  if (pyramids.empty()) throw ContractViolation("pcd_loss: empty pyramid list");
  const Tensor target = target_values.detach();
  Tensor total;
  for (const PyramidVector& p : pyramids) {
    if (!same_shape(p.values.shape(), target.shape())) {
      throw ContractViolation("pcd_loss: pyramid shape " + shape_str(p.values.shape()) +
                              " differs from target " + shape_str(target.shape()));
    }
    Tensor term = mean_all(abs(sub(target, p.values)));
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

Tensor pci_loss(const PyramidVector& full_map_pyramid, const PyramidVector& crop_map_pyramid) {
  if (!same_shape(full_map_pyramid.values.shape(), crop_map_pyramid.values.shape())) {
    throw ContractViolation("pci_loss: pyramid shapes differ, " +
                            shape_str(full_map_pyramid.values.shape()) + " vs " +
                            shape_str(crop_map_pyramid.values.shape()));
  }
  return mean_all(abs(sub(full_map_pyramid.values.detach(), crop_map_pyramid.values)));
}

Tensor total_loss(const Tensor& seg, const std::vector<Tensor>& pcd_per_tap,
                  const Tensor& pci, const LossConfig& cfg) {
  if (!seg.defined()) throw ContractViolation("total_loss: undefined segmentation loss");
  if (!pcd_per_tap.empty() && pcd_per_tap.size() != cfg.lambdas.size()) {
    throw ContractViolation("total_loss: " + std::to_string(pcd_per_tap.size()) +
                            " pcd terms for " + std::to_string(cfg.lambdas.size()) + " lambdas");
  }
  Tensor reg;
  for (size_t l = 0; l < pcd_per_tap.size(); ++l) {
    Tensor term = scale(pcd_per_tap[l], cfg.lambdas[l]);
    reg = reg.defined() ? add(reg, term) : term;
  }
  if (pci.defined()) {
    Tensor term = scale(pci, cfg.pci_weight);
    reg = reg.defined() ? add(reg, term) : term;
  }
  if (!reg.defined()) return seg;
  return add(seg, scale(reg, cfg.beta));
}

}  // namespace drpc
