#include "drpc/sceneforge.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "drpc/rng.hpp"
#include "drpc/tensor_io.hpp"

namespace drpc {

namespace {

constexpr std::array<Rgb, 4> kCarColors = {{
    {0.75, 0.15, 0.15},
    {0.15, 0.25, 0.70},
    {0.85, 0.85, 0.85},
    {0.80, 0.70, 0.20},
}};

// Per-class multiplicative jitter amplitude for the texture pass.
constexpr std::array<double, 6> kJitter = {0.02, 0.05, 0.06, 0.12, 0.03, 0.05};

struct Canvas {
  int h, w;
  std::vector<int> label;
  std::vector<Rgb> base;

  void paint(int y, int x, int cls, const Rgb& color) {
    label[static_cast<size_t>(y) * w + x] = cls;
    base[static_cast<size_t>(y) * w + x] = color;
  }
  int cls(int y, int x) const { return label[static_cast<size_t>(y) * w + x]; }
};

Rgb scale_rgb(const Rgb& c, double f) { return {c.r * f, c.g * f, c.b * f}; }

}  // namespace

RenderedSample render_scene(const SceneSpec& spec, uint64_t index) {
  const int h = spec.height, w = spec.width;
  if (h < 16 || w < 16) throw ConfigError("scene size must be at least 16x16");
  std::mt19937_64 rng(mix_seed(spec.layout_seed, index));

  Canvas cv{h, w, std::vector<int>(static_cast<size_t>(h) * w, kSky),
            std::vector<Rgb>(static_cast<size_t>(h) * w, spec.palette[kSky])};

  const int horizon = static_cast<int>(h * uniform(rng, 0.38, 0.52));

  // Buildings rise above the horizon.
  const int nb = 2 + static_cast<int>(spec.clutter * uniform(rng, 0.0, 2.999));
  for (int bi = 0; bi < nb; ++bi) {
    const int bw = uniform_int(rng, w / 8, w / 3);
    const int x0 = uniform_int(rng, 0, w - 2);
    const int top = uniform_int(rng, horizon / 4, (horizon * 3) / 4);
    const Rgb color = scale_rgb(spec.palette[kBuilding], uniform(rng, 0.7, 1.2));
    for (int y = top; y < horizon; ++y) {
      for (int x = x0; x < std::min(w, x0 + bw); ++x) {
        // window grid
        const bool window = (y % 6 < 2) && (x % 5 < 2);
        cv.paint(y, x, kBuilding, window ? scale_rgb(color, 0.55) : color);
      }
    }
  }

  // Vegetation blobs near the horizon.
  const int nv = 1 + static_cast<int>(spec.clutter * uniform(rng, 0.0, 1.999));
  for (int vi = 0; vi < nv; ++vi) {
    const double cx = uniform(rng, 0.0, w - 1.0);
    const double cy = horizon + uniform(rng, -h / 10.0, h / 24.0);
    const double rx = uniform(rng, w / 10.0, w / 4.0);
    const double ry = uniform(rng, h / 12.0, h / 5.0);
    const Rgb color = scale_rgb(spec.palette[kVegetation], uniform(rng, 0.8, 1.1));
    for (int y = std::max(0, static_cast<int>(cy - ry)); y < std::min(horizon + 2, static_cast<int>(cy + ry) + 1); ++y) {
      for (int x = 0; x < w; ++x) {
        const double dx = (x - cx) / rx, dy = (y - cy) / ry;
        if (dx * dx + dy * dy <= 1.0) cv.paint(y, x, kVegetation, color);
      }
    }
  }

  // Ground: grass by default, road trapezoid with sidewalk strips.
  const double road_cx = w / 2.0 + uniform(rng, -w / 8.0, w / 8.0);
  const double half_top = w * uniform(rng, 0.06, 0.12);
  const double half_bot = w * uniform(rng, 0.30, 0.45);
  const int side = std::max(2, static_cast<int>(w * 0.08));
  const Rgb grass = scale_rgb(spec.palette[kVegetation], 0.9);
  for (int y = horizon; y < h; ++y) {
    const double t = (h - 1 == horizon) ? 1.0 : static_cast<double>(y - horizon) / (h - 1 - horizon);
    const double hw = half_top + (half_bot - half_top) * t;
    const int x_lo = static_cast<int>(std::lround(road_cx - hw));
    const int x_hi = static_cast<int>(std::lround(road_cx + hw));
    for (int x = 0; x < w; ++x) {
      if (x >= x_lo && x < x_hi) {
        const bool lane = std::abs(x - road_cx) <= std::max(1.0, hw / 12.0) && (y % 8 < 4);
        cv.paint(y, x, kRoad,
                 lane ? scale_rgb(spec.palette[kRoad], 2.2) : spec.palette[kRoad]);
      } else if (x >= x_lo - side && x < x_hi + side) {
        cv.paint(y, x, kSidewalk, spec.palette[kSidewalk]);
      } else {
        cv.paint(y, x, kVegetation, grass);
      }
    }
  }

  // Cars sit on the road, scaled by their distance from the horizon.
  const int nc = 1 + static_cast<int>(spec.clutter * uniform(rng, 0.0, 1.999));
  for (int ci = 0; ci < nc; ++ci) {
    const int bottom = uniform_int(rng, horizon + (h - horizon) / 4, h - 2);
    const double t = static_cast<double>(bottom - horizon) / (h - 1 - horizon);
    const double hw = half_top + (half_bot - half_top) * t;
    const int ch = std::max(3, (bottom - horizon) / 3);
    const int cw = static_cast<int>(ch * 1.6);
    const int xc = static_cast<int>(std::lround(road_cx + uniform(rng, -hw * 0.6, hw * 0.6)));
    const Rgb color = kCarColors[static_cast<size_t>(uniform_int(rng, 0, 3))];
    for (int y = std::max(0, bottom - ch); y <= std::min(h - 1, bottom); ++y) {
      for (int x = std::max(0, xc - cw / 2); x <= std::min(w - 1, xc + cw / 2); ++x) {
        const bool window = (y < bottom - ch / 2) && std::abs(x - xc) < (cw * 7) / 20;
        cv.paint(y, x, kCar, window ? scale_rgb(color, 0.35) : color);
      }
    }
  }

  // Texture pass: sky gradient plus per-pixel luminance jitter, then
  // quantization to u8.
  Eigen::ArrayXd img(static_cast<int64_t>(3) * h * w);
  Eigen::ArrayXd lab(static_cast<int64_t>(h) * w);
  const int64_t plane = static_cast<int64_t>(h) * w;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int64_t p = static_cast<int64_t>(y) * w + x;
      const int cls = cv.cls(y, x);
      Rgb c = cv.base[static_cast<size_t>(p)];
      if (cls == kSky && horizon > 0) {
        c = scale_rgb(c, 0.85 + 0.25 * static_cast<double>(y) / horizon);
      }
      const double jitter = 1.0 + kJitter[static_cast<size_t>(cls)] * uniform(rng, -1.0, 1.0);
      c = scale_rgb(c, jitter);
      img[p] = std::round(std::clamp(c.r, 0.0, 1.0) * 255.0);
      img[plane + p] = std::round(std::clamp(c.g, 0.0, 1.0) * 255.0);
      img[2 * plane + p] = std::round(std::clamp(c.b, 0.0, 1.0) * 255.0);
      lab[p] = cls;
    }
  }
  RenderedSample out;
  out.image = Tensor::from_array({3, h, w}, std::move(img));
  out.label = Tensor::from_array({h, w}, std::move(lab));
  return out;
}

std::vector<SampleRecord> Dataset::select(const std::string& split,
                                          const std::string& domain_id) const {
  std::vector<SampleRecord> out;
  for (const SampleRecord& r : entries) {
    if (r.split == split && (domain_id.empty() || r.domain_id == domain_id)) out.push_back(r);
  }
  return out;
}

std::vector<std::string> Dataset::domains(const std::string& split) const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const SampleRecord& r : entries) {
    if (r.split == split && seen.insert(r.domain_id).second) out.push_back(r.domain_id);
  }
  return out;
}

namespace {

void write_manifest(const Dataset& ds) {
  std::ofstream os(ds.root / "manifest.tsv");
  if (!os) throw IoError("cannot write manifest: " + (ds.root / "manifest.tsv").string());
  os << "sampleId\tdomainId\tsplit\timagePath\tlabelPath\n";
  for (const SampleRecord& r : ds.entries) {
    os << r.sample_id << "\t" << r.domain_id << "\t" << r.split << "\t" << r.image_path << "\t"
       << r.label_path << "\n";
  }
  if (!os) throw IoError("manifest write failed: " + (ds.root / "manifest.tsv").string());
}

// Quantized image -> [0,1] floats -> stylize -> back to u8 integers,
// so an on-disk domain row equals stylizing the loaded source image.
Tensor stylize_u8(const Tensor& image_u8, const Stylizer& s) {
  if (s.is_identity()) return image_u8;
  Tensor f = Tensor::from_array(image_u8.shape(), image_u8.array() / 255.0);
  Tensor styled = apply(s, f);
  Eigen::ArrayXd q = (styled.array() * 255.0).round();
  return Tensor::from_array(image_u8.shape(), std::move(q));
}

void emit_sample(Dataset& ds, const SceneSpec& spec, uint64_t index, const std::string& sample_id,
                 const Stylizer& domain, const std::string& split) {
  const RenderedSample scene = render_scene(spec, index);
  const std::string label_rel = "labels/" + sample_id + ".tsr";
  const std::string image_rel = "images/" + sample_id + "__" + domain.id + ".tsr";
  if (!std::filesystem::exists(ds.root / label_rel)) {
    save_tensor(scene.label, ds.root / label_rel, Dtype::kU8);
  }
  save_tensor(stylize_u8(scene.image, domain), ds.root / image_rel, Dtype::kU8);
  ds.entries.push_back({sample_id, domain.id, split, image_rel, label_rel});
}

Dataset open_or_create(const std::filesystem::path& root) {
  std::filesystem::create_directories(root / "images");
  std::filesystem::create_directories(root / "labels");
  if (std::filesystem::exists(root / "manifest.tsv")) return load_dataset(root);
  Dataset ds;
  ds.root = root;
  return ds;
}

}  // namespace

Dataset generate(const SceneSpec& spec, int n, const Stylizer& domain,
                 const std::filesystem::path& root, const std::string& split,
                 uint64_t index_offset) {
  if (n < 1) throw ContractViolation("generate: n must be >= 1");
  Dataset ds = open_or_create(root);
  char buf[32];
  for (int i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof buf, "%s_%05d", split.c_str(), i);
    emit_sample(ds, spec, index_offset + static_cast<uint64_t>(i), buf, domain, split);
  }
  write_manifest(ds);
  return ds;
}

Dataset generate_dataset(const SceneSpec& spec, const DomainRegistry& registry,
                         const DatasetCounts& counts, const std::filesystem::path& root) {
  if (counts.train < 1 || counts.val < 1 || counts.test < 1) {
    throw ConfigError("dataset counts must all be >= 1");
  }
  registry.validate();
  Dataset ds = open_or_create(root);
  const Stylizer source = identity_stylizer("source");
  char buf[32];
  for (int i = 0; i < counts.train; ++i) {
    std::snprintf(buf, sizeof buf, "train_%05d", i);
    emit_sample(ds, spec, static_cast<uint64_t>(i), buf, source, "train");
  }
  // Disjoint layout index ranges keep the splits' scenes distinct.
  for (int i = 0; i < counts.val; ++i) {
    std::snprintf(buf, sizeof buf, "val_%05d", i);
    emit_sample(ds, spec, 1000000 + static_cast<uint64_t>(i), buf, registry.validation, "val");
  }
  for (int i = 0; i < counts.test; ++i) {
    std::snprintf(buf, sizeof buf, "test_%05d", i);
    for (const Stylizer& s : registry.heldout) {
      emit_sample(ds, spec, 2000000 + static_cast<uint64_t>(i), buf, s, "test");
    }
  }
  write_manifest(ds);
  return ds;
}

Dataset load_dataset(const std::filesystem::path& root) {
  std::ifstream is(root / "manifest.tsv");
  if (!is) throw IoError("cannot open manifest: " + (root / "manifest.tsv").string());
  Dataset ds;
  ds.root = root;
  std::string line;
  if (!std::getline(is, line)) throw IoError("empty manifest: " + (root / "manifest.tsv").string());
  size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    SampleRecord r;
    if (!std::getline(ls, r.sample_id, '\t') || !std::getline(ls, r.domain_id, '\t') ||
        !std::getline(ls, r.split, '\t') || !std::getline(ls, r.image_path, '\t') ||
        !std::getline(ls, r.label_path, '\t')) {
      throw IoError("malformed manifest line " + std::to_string(lineno) + " in " +
                    (root / "manifest.tsv").string());
    }
    if (!std::filesystem::exists(root / r.image_path)) {
      throw IoError("missing image file: " + (root / r.image_path).string());
    }
    if (!std::filesystem::exists(root / r.label_path)) {
      throw IoError("missing label file: " + (root / r.label_path).string());
    }
    ds.entries.push_back(std::move(r));
  }
  return ds;
}

LoadedSample load_sample(const Dataset& dataset, const SampleRecord& record) {
  LoadedSample s;
  const LoadedTensor img = load_tensor(dataset.root / record.image_path);
  s.image = Tensor::from_array(img.tensor.shape(), img.tensor.array() / 255.0);
  s.label = load_tensor(dataset.root / record.label_path).tensor;
  s.sample_id = record.sample_id;
  s.domain_id = record.domain_id;
  return s;
}

std::map<int, int64_t> class_histogram(const Dataset& dataset, const std::string& split) {
  std::map<int, int64_t> hist;
  std::set<std::string> seen_labels;
  for (const SampleRecord& r : dataset.entries) {
    if (r.split != split || !seen_labels.insert(r.label_path).second) continue;
    const Tensor label = load_tensor(dataset.root / r.label_path).tensor;
    const double* d = label.data();
    for (int64_t i = 0; i < label.size(); ++i) ++hist[static_cast<int>(d[i])];
  }
  return hist;
}

GroupLoader::GroupLoader(const Dataset& dataset, const DomainRegistry& registry, uint64_t seed,
                         bool source_only)
    : dataset_(&dataset), registry_(&registry), source_only_(source_only), seed_(seed) {
  registry.validate();
  train_ = dataset.select("train");
  if (train_.empty()) throw DataError("dataset has no train split");
  order_.resize(train_.size());
  reshuffle();
}

void GroupLoader::reshuffle() {
  for (size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  std::mt19937_64 rng(mix_seed(seed_, epoch_));
  // Fisher-Yates with the portable draw helper.
  for (size_t i = order_.size(); i > 1; --i) {
    const size_t j = static_cast<size_t>(uniform_int(rng, 0, static_cast<int>(i) - 1));
    std::swap(order_[i - 1], order_[j]);
  }
  cursor_ = 0;
  ++epoch_;
}

std::vector<DomainGroup> GroupLoader::next_batch(int batch_groups) {
  if (batch_groups < 1) throw ContractViolation("batchGroups must be >= 1");
  std::vector<DomainGroup> batch;
  batch.reserve(static_cast<size_t>(batch_groups));
  for (int gi = 0; gi < batch_groups; ++gi) {
    if (cursor_ >= order_.size()) reshuffle();
    const SampleRecord& rec = train_[order_[cursor_++]];
    LoadedSample s = load_sample(*dataset_, rec);
    DomainGroup group;
    if (source_only_) {
      group.images.push_back(s.image);
      group.domain_ids.push_back("source");
      group.label = s.label;
    } else {
      group = make_group(s.image, s.label, *registry_);
    }
    group.sample_id = s.sample_id;
    batch.push_back(std::move(group));
  }
  return batch;
}

std::vector<DomainGroup> load_group_batch(const Dataset& dataset, const DomainRegistry& registry,
                                          int batch_groups, uint64_t seed) {
  GroupLoader loader(dataset, registry, seed);
  return loader.next_batch(batch_groups);
}

}  // namespace drpc
