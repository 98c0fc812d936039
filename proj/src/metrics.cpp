#include "drpc/metrics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace drpc {

ConfusionMatrix::ConfusionMatrix(int num_classes, int ignore_index)
    : num_classes_(num_classes),
      ignore_index_(ignore_index),
      counts_(static_cast<size_t>(num_classes) * num_classes, 0) {
  if (num_classes < 1) throw ContractViolation("confusion matrix needs >= 1 class");
}

void ConfusionMatrix::accumulate(const Tensor& pred, const Tensor& truth) {
  if (!same_shape(pred.shape(), truth.shape()) || pred.ndim() != 2) {
    throw DimensionError("accumulate: pred " + shape_str(pred.shape()) + " vs truth " +
                         shape_str(truth.shape()));
  }
  const double* p = pred.data();
  const double* t = truth.data();
  for (int64_t i = 0; i < pred.size(); ++i) {
    const long ti = std::lround(t[i]);
    if (ti == ignore_index_) {
      ++ignored_;
      continue;
    }
    const long pi = std::lround(p[i]);
    if (ti < 0 || ti >= num_classes_) {
      throw DataError("truth id " + std::to_string(ti) + " outside [0," +
                      std::to_string(num_classes_) + ") at flat index " + std::to_string(i));
    }
    if (pi < 0 || pi >= num_classes_) {
      throw ContractViolation("prediction id " + std::to_string(pi) +
                              " outside the known classes; the model must emit argmax ids");
    }
    ++counts_[static_cast<size_t>(ti) * num_classes_ + pi];
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.num_classes_ != num_classes_) {
    throw ContractViolation("merging confusion matrices of different class counts");
  }
  for (size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  ignored_ += other.ignored_;
}

int64_t ConfusionMatrix::total_counted() const {
  int64_t n = 0;
  for (int64_t c : counts_) n += c;
  return n;
}

IouResult miou(const ConfusionMatrix& cm) {
  const int k = cm.num_classes();
  IouResult res;
  res.per_class.assign(static_cast<size_t>(k), std::nan(""));
  double sum = 0.0;
  int included = 0;
  for (int c = 0; c < k; ++c) {
    const int64_t tp = cm.at(c, c);
    int64_t fp = 0, fn = 0;
    for (int o = 0; o < k; ++o) {
      if (o == c) continue;
      fp += cm.at(o, c);
      fn += cm.at(c, o);
    }
    const int64_t denom = tp + fp + fn;
    if (denom == 0) continue;  // class absent from truth and prediction
    const double iou = static_cast<double>(tp) / static_cast<double>(denom);
    res.per_class[static_cast<size_t>(c)] = iou;
    sum += iou;
    ++included;
  }
  res.miou = included > 0 ? sum / included : 0.0;
  return res;
}

double g_perf(const std::vector<double>& domain_mious) {
  if (domain_mious.empty()) throw ContractViolation("g_perf over an empty domain list");
  double sum = 0.0;
  for (double m : domain_mious) sum += m;
  return sum / static_cast<double>(domain_mious.size());
}

MetricReport make_report(const std::vector<std::pair<std::string, ConfusionMatrix>>& per_domain) {
  MetricReport report;
  std::vector<double> mious;
  for (const auto& [domain, cm] : per_domain) {
    IouResult r = miou(cm);
    mious.push_back(r.miou);
    report.per_domain.emplace_back(domain, std::move(r));
  }
  report.g_perf = g_perf(mious);
  return report;
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  for (const auto& [domain, res] : per_domain) {
    nlohmann::ordered_json d;
    for (double v : res.per_class) {
      if (std::isnan(v)) d["perClass"].push_back(nullptr);
      else d["perClass"].push_back(v);
    }
    d["miou"] = res.miou;
    j["perDomain"][domain] = d;
  }
  j["gPerf"] = g_perf;
  return j.dump(2) + "\n";
}

std::string MetricReport::to_csv(const std::vector<std::string>& class_names) const {
  std::ostringstream os;
  os << "domain";
  for (const std::string& name : class_names) os << "," << name;
  os << ",mIoU\n";
  os.setf(std::ios::fixed);
  os.precision(4);
  for (const auto& [domain, res] : per_domain) {
    os << domain;
    for (double v : res.per_class) {
      os << ",";
      if (!std::isnan(v)) os << v;
    }
    os << "," << res.miou << "\n";
  }
  os << "gPerf";
  for (size_t i = 0; i < class_names.size(); ++i) os << ",";
  os << "," << g_perf << "\n";
  return os.str();
}

void MetricReport::write(const std::filesystem::path& json_path,
                         const std::filesystem::path& csv_path,
                         const std::vector<std::string>& class_names) const {
  std::ofstream js(json_path);
  if (!js) throw IoError("cannot write " + json_path.string());
  js << to_json();
  std::ofstream cs(csv_path);
  if (!cs) throw IoError("cannot write " + csv_path.string());
  cs << to_csv(class_names);
}

}  // namespace drpc
