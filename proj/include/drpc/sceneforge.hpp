#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "drpc/stylizer.hpp"
#include "drpc/tensor.hpp"

namespace drpc {

// Class ids used by the generator. The loader additionally accepts 255
// as the ignore label in external data; the generator never emits it.
enum SceneClass : int {
  kSky = 0,
  kRoad = 1,
  kBuilding = 2,
  kVegetation = 3,
  kCar = 4,
  kSidewalk = 5,
};

struct Rgb {
  double r, g, b;
};

struct SceneSpec {
  int width = 64;
  int height = 64;
  int num_classes = 6;
  uint64_t layout_seed = 0;
  double clutter = 1.0;  // scales building/car/vegetation counts
  std::array<Rgb, 6> palette = {{
      {0.55, 0.75, 0.95},  // sky
      {0.28, 0.28, 0.30},  // road
      {0.62, 0.48, 0.38},  // building
      {0.18, 0.52, 0.20},  // vegetation
      {0.75, 0.15, 0.15},  // car (base; instances draw from a small set)
      {0.62, 0.62, 0.60},  // sidewalk
  }};
};

// Image and label as u8-valued tensors (integers 0..255 / class ids),
// ready for bit-exact round trips through the tensor file format.
struct RenderedSample {
  Tensor image;  // [3,H,W], values 0..255
  Tensor label;  // [H,W], class ids
};

// Layered scene, deterministic in (spec.layout_seed, index): sky band,
// building blocks with window grids, vegetation ground and blobs, road
// trapezoid with lane dashes, sidewalk strips, cars with window bands.
RenderedSample render_scene(const SceneSpec& spec, uint64_t index);

struct SampleRecord {
  std::string sample_id;
  std::string domain_id;
  std::string split;  // train | val | test
  std::string image_path;  // relative to dataset root
  std::string label_path;
};

struct Dataset {
  std::filesystem::path root;
  std::vector<SampleRecord> entries;

  std::vector<SampleRecord> select(const std::string& split,
                                   const std::string& domain_id = "") const;
  std::vector<std::string> domains(const std::string& split) const;
};

struct DatasetCounts {
  int train = 200;
  int val = 24;
  int test = 24;
};

// Renders `n` samples into one domain (identity stylizer = the source
// domain) and writes them under root. Appends to an existing manifest
// if one is present.
Dataset generate(const SceneSpec& spec, int n, const Stylizer& domain,
                 const std::filesystem::path& root, const std::string& split = "train",
                 uint64_t index_offset = 0);

// Full experiment dataset: train split in the source domain, val split
// through the validation stylizer, and one test row per held-out
// stylizer per test scene (same scene, same label, different style).
Dataset generate_dataset(const SceneSpec& spec, const DomainRegistry& registry,
                         const DatasetCounts& counts, const std::filesystem::path& root);

Dataset load_dataset(const std::filesystem::path& root);

struct LoadedSample {
  Tensor image;  // [3,H,W] in [0,1]
  Tensor label;  // [H,W] class ids (255 allowed as ignore)
  std::string sample_id;
  std::string domain_id;
};

LoadedSample load_sample(const Dataset& dataset, const SampleRecord& record);

std::map<int, int64_t> class_histogram(const Dataset& dataset, const std::string& split);

// Epoch-shuffled stream of training DomainGroups. Batches draw from
// the train split only; exhausting it reshuffles under a seed derived
// from (seed, epoch).
class GroupLoader {
 public:
  // source_only skips stylization entirely (groups hold just the
  // source image); the shuffle order is unchanged, so runs with and
  // without it see the same samples in the same order.
  GroupLoader(const Dataset& dataset, const DomainRegistry& registry, uint64_t seed,
              bool source_only = false);

  std::vector<DomainGroup> next_batch(int batch_groups);
  size_t samples_per_epoch() const { return order_.size(); }

 private:
  void reshuffle();

  const Dataset* dataset_;
  const DomainRegistry* registry_;
  bool source_only_;
  std::vector<SampleRecord> train_;
  std::vector<size_t> order_;
  size_t cursor_ = 0;
  uint64_t seed_;
  uint64_t epoch_ = 0;
};

// One-shot form of the loader.
std::vector<DomainGroup> load_group_batch(const Dataset& dataset, const DomainRegistry& registry,
                                          int batch_groups, uint64_t seed);

}  // namespace drpc
