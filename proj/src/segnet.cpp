#include "drpc/segnet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "drpc/rng.hpp"
#include "drpc/tensor_io.hpp"
#include "drpc/tensor_ops.hpp"

namespace drpc {

const Tensor& ActivationRecord::get(const std::string& name) const {
  for (const auto& [tap_name, tensor] : taps) {
    if (tap_name == name) return tensor;
  }
  throw ContractViolation("no activation recorded for tap '" + name + "'");
}

namespace {

Tensor he_kernel(int out_c, int in_c, int kh, int kw, std::mt19937_64& rng) {
  const int64_t fan_in = static_cast<int64_t>(in_c) * kh * kw;
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  Eigen::ArrayXd values(static_cast<int64_t>(out_c) * in_c * kh * kw);
  for (int64_t i = 0; i < values.size(); ++i) values[i] = normal(rng, 0.0, stddev);
  Tensor t = Tensor::from_array({out_c, in_c, kh, kw}, std::move(values));
  t.set_trainable(true);
  return t;
}

Tensor zero_bias(int out_c) {
  Tensor t = Tensor::zeros({out_c});
  t.set_trainable(true);
  return t;
}

}  // namespace

SegNetwork SegNetwork::build(const Config& cfg) {
  if (cfg.num_classes < 2) throw ConfigError("segnet: numClasses must be >= 2");
  if (cfg.channels_base < 1) throw ConfigError("segnet: channelsBase must be >= 1");
  if (cfg.depth < 3) throw ConfigError("segnet: depth must be >= 3");

  SegNetwork net;
  net.cfg_ = cfg;
  net.layer_names_.push_back("stem");
  for (int d = 1; d <= cfg.depth; ++d) net.layer_names_.push_back("enc" + std::to_string(d));
  net.layer_names_.push_back("head");
  net.layer_names_.push_back("fuse1");
  net.layer_names_.push_back("fuse2");
  net.layer_names_.push_back("logits");

  const int total = static_cast<int>(net.layer_names_.size());
  if (cfg.tap_count < 1 || cfg.tap_count > total) {
    throw ConfigError("segnet: tapCount " + std::to_string(cfg.tap_count) +
                      " outside [1," + std::to_string(total) + "]");
  }
  net.tap_names_.assign(net.layer_names_.end() - cfg.tap_count, net.layer_names_.end());

  std::mt19937_64 rng(cfg.seed);
  auto push = [&](const std::string& name, Tensor t) {
    net.param_names_.push_back(name);
    net.params_.push_back(std::move(t));
  };
  const int base = cfg.channels_base;
  push("stem.w", he_kernel(base, 3, 3, 3, rng));
  push("stem.b", zero_bias(base));
  int ch = base;
  for (int d = 1; d <= cfg.depth; ++d) {
    push("enc" + std::to_string(d) + ".w", he_kernel(ch * 2, ch, 3, 3, rng));
    push("enc" + std::to_string(d) + ".b", zero_bias(ch * 2));
    ch *= 2;
  }
  push("head.w", he_kernel(cfg.num_classes, ch, 1, 1, rng));
  push("head.b", zero_bias(cfg.num_classes));
  // fuse1 scores the second-coarsest stage, fuse2 the one above it.
  push("fuse1.w", he_kernel(cfg.num_classes, ch / 2, 1, 1, rng));
  push("fuse1.b", zero_bias(cfg.num_classes));
  push("fuse2.w", he_kernel(cfg.num_classes, ch / 4, 1, 1, rng));
  push("fuse2.b", zero_bias(cfg.num_classes));
  return net;
}

SegNetwork SegNetwork::build(int num_classes, int channels_base, int depth, int tap_count,
                             uint64_t seed) {
  return build(Config{num_classes, channels_base, depth, tap_count, seed});
}

namespace {

struct ParamLookup {
  const std::vector<std::string>& names;
  const std::vector<Tensor>& params;
  const Tensor& operator()(const std::string& name) const {
    for (size_t i = 0; i < names.size(); ++i) {
      if (names[i] == name) return params[i];
    }
    throw ContractViolation("missing parameter '" + name + "'");
  }
};

}  // namespace

ForwardResult SegNetwork::forward(const Tensor& images) const {
  if (images.ndim() != 4 || images.dim(1) != 3) {
    throw DimensionError("segnet forward expects [N,3,H,W], got " + shape_str(images.shape()));
  }
  const int h = images.dim(2), w = images.dim(3);
  const int stride_total = 1 << cfg_.depth;
  if (h % stride_total != 0 || w % stride_total != 0) {
    throw DimensionError("segnet forward: spatial size " + std::to_string(h) + "x" +
                         std::to_string(w) + " not divisible by 2^depth = " +
                         std::to_string(stride_total));
  }
  ParamLookup p{param_names_, params_};

  std::vector<std::pair<std::string, Tensor>> outputs;
  Tensor x = relu(conv2d(images, p("stem.w"), p("stem.b"), 1, 1));
  outputs.emplace_back("stem", x);
  std::vector<Tensor> stages;  // encoder stage outputs, finest first
  for (int d = 1; d <= cfg_.depth; ++d) {
    const std::string name = "enc" + std::to_string(d);
    x = relu(conv2d(x, p(name + ".w"), p(name + ".b"), 2, 1));
    outputs.emplace_back(name, x);
    stages.push_back(x);
  }

  Tensor score = conv2d(x, p("head.w"), p("head.b"), 1, 0);
  outputs.emplace_back("head", score);

  const Tensor& skip1 = stages[static_cast<size_t>(cfg_.depth - 2)];
  score = add(resize2d(score, skip1.dim(2), skip1.dim(3), ResizeMode::kBilinear),
              conv2d(skip1, p("fuse1.w"), p("fuse1.b"), 1, 0));
  outputs.emplace_back("fuse1", score);

  const Tensor& skip2 = stages[static_cast<size_t>(cfg_.depth - 3)];
  score = add(resize2d(score, skip2.dim(2), skip2.dim(3), ResizeMode::kBilinear),
              conv2d(skip2, p("fuse2.w"), p("fuse2.b"), 1, 0));
  outputs.emplace_back("fuse2", score);

  Tensor logits = resize2d(score, h, w, ResizeMode::kBilinear);
  outputs.emplace_back("logits", logits);

  ForwardResult result;
  result.logits = logits;
  for (const std::string& tap : tap_names_) {
    for (const auto& [name, tensor] : outputs) {
      if (name == tap) result.acts.taps.emplace_back(name, tensor);
    }
  }
  return result;
}

int64_t SegNetwork::parameter_count() const {
  int64_t n = 0;
  for (const Tensor& t : params_) n += t.size();
  return n;
}

std::vector<std::array<int, 3>> SegNetwork::tap_shapes(int h, int w) const {
  std::map<std::string, std::array<int, 3>> shapes;
  int ch = cfg_.channels_base;
  shapes["stem"] = {ch, h, w};
  int sh = h, sw = w;
  for (int d = 1; d <= cfg_.depth; ++d) {
    ch *= 2;
    sh /= 2;
    sw /= 2;
    shapes["enc" + std::to_string(d)] = {ch, sh, sw};
  }
  shapes["head"] = {cfg_.num_classes, sh, sw};
  shapes["fuse1"] = {cfg_.num_classes, sh * 2, sw * 2};
  shapes["fuse2"] = {cfg_.num_classes, sh * 4, sw * 4};
  shapes["logits"] = {cfg_.num_classes, h, w};
  std::vector<std::array<int, 3>> out;
  for (const std::string& tap : tap_names_) out.push_back(shapes.at(tap));
  return out;
}

SegNetwork SegNetwork::snapshot() const {
  SegNetwork copy;
  copy.cfg_ = cfg_;
  copy.layer_names_ = layer_names_;
  copy.tap_names_ = tap_names_;
  copy.param_names_ = param_names_;
  copy.params_.reserve(params_.size());
  for (const Tensor& t : params_) copy.params_.push_back(t.detach());
  return copy;
}

void SegNetwork::save_checkpoint(const std::filesystem::path& dir,
                                 const std::string& config_hash) const {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw IoError("cannot write checkpoint manifest: " + (dir / "manifest.txt").string());
  manifest << "drpc-checkpoint v1\n";
  manifest << "config numClasses=" << cfg_.num_classes << " channelsBase=" << cfg_.channels_base
           << " depth=" << cfg_.depth << " tapCount=" << cfg_.tap_count << " seed=" << cfg_.seed
           << "\n";
  if (!config_hash.empty()) manifest << "confighash " << config_hash << "\n";
  manifest << "topology";
  for (const std::string& name : layer_names_) manifest << " " << name;
  manifest << "\n";
  for (size_t i = 0; i < params_.size(); ++i) {
    const std::string file = param_names_[i] + ".tsr";
    manifest << "param " << param_names_[i] << " " << file << "\n";
    save_tensor(params_[i], dir / file, Dtype::kF64);
  }
  if (!manifest) throw IoError("write failed: " + (dir / "manifest.txt").string());
}

SegNetwork SegNetwork::load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest) throw IoError("cannot open checkpoint manifest: " + (dir / "manifest.txt").string());
  std::string line;
  if (!std::getline(manifest, line) || line != "drpc-checkpoint v1") {
    throw IoError("bad checkpoint header in " + (dir / "manifest.txt").string());
  }
  Config cfg;
  std::vector<std::pair<std::string, std::string>> param_files;
  while (std::getline(manifest, line)) {
    std::istringstream is(line);
    std::string tag;
    is >> tag;
    if (tag == "config") {
      std::string kv;
      while (is >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw IoError("bad config entry '" + kv + "' in checkpoint");
        const std::string key = kv.substr(0, eq);
        const std::string value = kv.substr(eq + 1);
        if (key == "numClasses") cfg.num_classes = std::stoi(value);
        else if (key == "channelsBase") cfg.channels_base = std::stoi(value);
        else if (key == "depth") cfg.depth = std::stoi(value);
        else if (key == "tapCount") cfg.tap_count = std::stoi(value);
        else if (key == "seed") cfg.seed = std::stoull(value);
        else throw IoError("unknown checkpoint config key '" + key + "'");
      }
    } else if (tag == "param") {
      std::string name, file;
      is >> name >> file;
      param_files.emplace_back(name, file);
    }
    // "confighash" and "topology" lines are informational
  }
  SegNetwork net = build(cfg);
  if (param_files.size() != net.params_.size()) {
    throw IoError("checkpoint lists " + std::to_string(param_files.size()) + " parameters, expected " +
                  std::to_string(net.params_.size()));
  }
  for (const auto& [name, file] : param_files) {
    bool found = false;
    for (size_t i = 0; i < net.param_names_.size(); ++i) {
      if (net.param_names_[i] != name) continue;
      LoadedTensor loaded = load_tensor(dir / file);
      if (!same_shape(loaded.tensor.shape(), net.params_[i].shape())) {
        throw IoError("checkpoint parameter '" + name + "' has shape " +
                      shape_str(loaded.tensor.shape()) + ", expected " +
                      shape_str(net.params_[i].shape()));
      }
      net.params_[i].array() = loaded.tensor.array();
      found = true;
      break;
    }
    if (!found) throw IoError("checkpoint parameter '" + name + "' not part of this topology");
  }
  return net;
}

}  // namespace drpc
