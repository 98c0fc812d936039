#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "drpc/tensor.hpp"

namespace drpc {

// Rows are ground truth, columns are predictions. Counts only grow;
// merging per-worker matrices is elementwise addition.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes, int ignore_index = 255);

  // pred/truth are [H,W] id maps; truth may contain the ignore index.
  void accumulate(const Tensor& pred, const Tensor& truth);
  void merge(const ConfusionMatrix& other);

  int num_classes() const { return num_classes_; }
  int64_t ignored() const { return ignored_; }
  int64_t total_counted() const;
  int64_t at(int truth, int pred) const {
    return counts_[static_cast<size_t>(truth) * num_classes_ + pred];
  }

 private:
  int num_classes_;
  int ignore_index_;
  int64_t ignored_ = 0;
  std::vector<int64_t> counts_;
};

struct IouResult {
  // NaN marks classes absent from both truth and prediction; they are
  // excluded from the mean (PASCAL VOC convention).
  std::vector<double> per_class;
  double miou = 0.0;
};

IouResult miou(const ConfusionMatrix& cm);

// Mean mIoU over the unseen test domains.
double g_perf(const std::vector<double>& domain_mious);

struct MetricReport {
  // domain id -> (per-class IoU, mIoU), insertion-ordered
  std::vector<std::pair<std::string, IouResult>> per_domain;
  double g_perf = 0.0;

  std::string to_json() const;
  std::string to_csv(const std::vector<std::string>& class_names) const;
  void write(const std::filesystem::path& json_path, const std::filesystem::path& csv_path,
             const std::vector<std::string>& class_names) const;
};

MetricReport make_report(const std::vector<std::pair<std::string, ConfusionMatrix>>& per_domain);

}  // namespace drpc
