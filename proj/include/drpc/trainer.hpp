#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "drpc/consistency.hpp"
#include "drpc/metrics.hpp"
#include "drpc/pyramid.hpp"
#include "drpc/sceneforge.hpp"
#include "drpc/segnet.hpp"
#include "drpc/tensor_ops.hpp"

namespace drpc {

// The five ablation arms.
enum class TrainMode { kBaseline, kDr, kDrPcd, kDrPci, kFull };

TrainMode train_mode_from(const std::string& name);
std::string train_mode_name(TrainMode mode);
std::string train_mode_label(TrainMode mode);  // table row label, e.g. "+DR"

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Moment buffers; persist across steps.
struct AdamState {
  std::vector<Eigen::ArrayXd> m;
  std::vector<Eigen::ArrayXd> v;

  static AdamState init_for(const std::vector<Tensor>& params);
};

// Standard bias-corrected Adam update on the accumulated gradients;
// t is the 1-based step count.
void adam_step(std::vector<Tensor>& params, AdamState& state, int64_t t, const AdamConfig& cfg);

// Random crop with the image's aspect ratio: rho uniform in
// [rho_min, rho_max], height snapped down to a multiple of
// stride_align, position uniform on the stride grid.
CropSpec sample_crop(int h, int w, double rho_min, double rho_max, int stride_align,
                     std::mt19937_64& rng);

struct TrainConfig {
  TrainMode mode = TrainMode::kFull;
  int steps = 2000;
  int batch_groups = 1;
  // 0 = derived from batchGroups*(K+1); a nonzero value that does not
  // match is rejected (image-level batch sizes must be whole groups).
  int effective_batch = 0;
  AdamConfig adam;
  LossConfig loss;
  SegNetwork::Config net;
  uint64_t init_seed = 1;
  uint64_t data_seed = 2;
  uint64_t crop_seed = 3;
  int eval_every = 200;  // validation cadence in steps; 0 disables
  ResizeMode crop_resize = ResizeMode::kBilinear;

  bool dr_enabled() const { return mode != TrainMode::kBaseline; }
  bool consistency_enabled() const {
    return mode != TrainMode::kBaseline && mode != TrainMode::kDr;
  }
  bool pcd_enabled() const {
    return mode == TrainMode::kDrPcd || mode == TrainMode::kFull;
  }
  bool pci_enabled() const {
    return mode == TrainMode::kDrPci || mode == TrainMode::kFull;
  }

  // Checks mode exclusions, tap geometry for 8x8 pooling, and the
  // crop-ratio floor for the in-image term. image_h/image_w are the
  // training image extents; k is the registry's stylizer count.
  void validate(int image_h, int image_w, int k) const;
};

struct TrainResult {
  std::filesystem::path run_dir;
  std::filesystem::path checkpoint_dir;
  std::filesystem::path loss_log;
  std::filesystem::path batch_log;
  double final_val_miou = -1.0;  // -1 when eval_every == 0
  int steps_run = 0;
};

// Runs the optimization loop and writes the run directory layout:
// config.snapshot, logs/loss.csv, logs/batches.csv, logs/val.csv,
// checkpoints/final/, reports/. Aborts with NumericError (carrying the
// offending batch's sample ids) if the loss goes non-finite.
TrainResult train(const TrainConfig& cfg, const Dataset& dataset, const DomainRegistry& registry,
                  const std::filesystem::path& run_dir, const std::string& config_snapshot = "");

// Argmax-prediction evaluation of a network over one split, one
// confusion matrix per domain.
MetricReport evaluate(const SegNetwork& net, const Dataset& dataset, const std::string& split,
                      const std::vector<std::string>& domains, int ignore_index = 255);

struct AblationArmResult {
  std::string arm;  // FCN, +DR, +PCD, +PCI, All
  // median over seeds, per held-out domain (domain order as in report)
  std::vector<double> median_miou;
  double median_g_perf = 0.0;
  // raw per-seed values [seed][domain]
  std::vector<std::vector<double>> seed_miou;
  std::vector<double> seed_g_perf;
};

struct AblationReport {
  std::vector<std::string> domains;
  std::vector<AblationArmResult> arms;
  std::string note;  // reference full-scale numbers, for context only

  std::string to_json() const;
  std::string to_csv() const;
};

// Trains all five arms under each seed triple (shared across arms so
// the comparison is paired), evaluates every run on the held-out test
// domains, and reports per-arm medians. Runs are independent and are
// dispatched over `workers` threads.
AblationReport ablate(const TrainConfig& base_cfg, const Dataset& dataset,
                      const DomainRegistry& registry, const std::vector<uint64_t>& seeds,
                      const std::filesystem::path& out_dir, int workers = 0);

}  // namespace drpc
