#include "drpc/config.hpp"

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "drpc/rng.hpp"

namespace drpc {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string fmt_double(double v) {
  if (v == static_cast<int64_t>(v) && std::abs(v) < 1e15) {
    return std::to_string(static_cast<int64_t>(v));
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Parser {
  std::string section;
  size_t lineno = 0;

  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError("config line " + std::to_string(lineno) + ": " + msg);
  }
  double num(const std::string& v) const {
    try {
      size_t used = 0;
      const double d = std::stod(v, &used);
      if (used != v.size()) fail("trailing characters in number '" + v + "'");
      return d;
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      fail("expected a number, got '" + v + "'");
    }
  }
  int integer(const std::string& v) const {
    const double d = num(v);
    if (d != static_cast<int>(d)) fail("expected an integer, got '" + v + "'");
    return static_cast<int>(d);
  }
  uint64_t seed(const std::string& v) const {
    try {
      size_t used = 0;
      const uint64_t s = std::stoull(v, &used);
      if (used != v.size()) fail("trailing characters in seed '" + v + "'");
      return s;
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      fail("expected a non-negative integer seed, got '" + v + "'");
    }
  }
  std::vector<double> numbers(const std::string& v) const {
    std::vector<double> out;
    std::istringstream is(v);
    std::string item;
    while (std::getline(is, item, ',')) out.push_back(num(trim(item)));
    if (out.empty()) fail("expected a comma-separated number list");
    return out;
  }
};

}  // namespace

ExperimentConfig default_config() {
  ExperimentConfig cfg;
  cfg.registry = default_registry();
  cfg.trainer.net.num_classes = cfg.scene.num_classes;
  return cfg;
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg = default_config();
  bool saw_stylizer = false;
  std::vector<Stylizer> train, heldout;
  std::vector<Stylizer> val;

  Parser p;
  std::istringstream is(text);
  std::string raw;
  Stylizer* current_stylizer = nullptr;
  std::string current_stylizer_split;

  auto flush_stylizer = [&](Stylizer s, const std::string& split) {
    if (split == "train") train.push_back(std::move(s));
    else if (split == "heldout") heldout.push_back(std::move(s));
    else if (split == "val") val.push_back(std::move(s));
    else p.fail("stylizer '" + s.id + "' has no valid split (train|heldout|val)");
  };

  Stylizer pending;
  while (std::getline(is, raw)) {
    ++p.lineno;
    std::string line = trim(raw);
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = trim(line.substr(0, hash));
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') p.fail("unterminated section header");
      if (current_stylizer) {
        flush_stylizer(pending, current_stylizer_split);
        current_stylizer = nullptr;
      }
      p.section = trim(line.substr(1, line.size() - 2));
      if (p.section.rfind("stylizer.", 0) == 0) {
        saw_stylizer = true;
        pending = Stylizer{};
        pending.id = p.section.substr(9);
        if (pending.id.empty()) p.fail("stylizer section needs an id: [stylizer.<id>]");
        current_stylizer = &pending;
        current_stylizer_split.clear();
      } else if (p.section != "scene" && p.section != "network" && p.section != "loss" &&
                 p.section != "trainer" && p.section != "eval") {
        p.fail("unknown section [" + p.section + "]");
      }
      continue;
    }

    const size_t eq = line.find('=');
    if (eq == std::string::npos) p.fail("expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) p.fail("empty key");
    if (p.section.empty()) p.fail("key '" + key + "' outside any section");

    if (current_stylizer) {
      if (key == "split") current_stylizer_split = value;
      else if (key == "hue") current_stylizer->hue_deg = p.num(value);
      else if (key == "sat") current_stylizer->saturation = p.num(value);
      else if (key == "contrast") current_stylizer->contrast = p.num(value);
      else if (key == "brightness") current_stylizer->brightness = p.num(value);
      else if (key == "gray") current_stylizer->grayscale = p.num(value);
      else if (key == "noiseAmp") current_stylizer->noise_amp = p.num(value);
      else if (key == "noiseSeed") current_stylizer->noise_seed = p.seed(value);
      else p.fail("unknown stylizer key '" + key + "'");
    } else if (p.section == "scene") {
      if (key == "width") cfg.scene.width = p.integer(value);
      else if (key == "height") cfg.scene.height = p.integer(value);
      else if (key == "numClasses") cfg.scene.num_classes = p.integer(value);
      else if (key == "layoutSeed") cfg.scene.layout_seed = p.seed(value);
      else if (key == "clutter") cfg.scene.clutter = p.num(value);
      else if (key == "trainSamples") cfg.counts.train = p.integer(value);
      else if (key == "valSamples") cfg.counts.val = p.integer(value);
      else if (key == "testSamples") cfg.counts.test = p.integer(value);
      else p.fail("unknown key '" + key + "' in [scene]");
    } else if (p.section == "network") {
      if (key == "channelsBase") cfg.trainer.net.channels_base = p.integer(value);
      else if (key == "depth") cfg.trainer.net.depth = p.integer(value);
      else if (key == "tapCount") cfg.trainer.net.tap_count = p.integer(value);
      else p.fail("unknown key '" + key + "' in [network]");
    } else if (p.section == "loss") {
      if (key == "lambdas") cfg.trainer.loss.lambdas = p.numbers(value);
      else if (key == "pciWeight") cfg.trainer.loss.pci_weight = p.num(value);
      else if (key == "beta") cfg.trainer.loss.beta = p.num(value);
      else if (key == "rhoMin") cfg.trainer.loss.rho_min = p.num(value);
      else if (key == "rhoMax") cfg.trainer.loss.rho_max = p.num(value);
      else if (key == "ignoreIndex") cfg.trainer.loss.ignore_index = p.integer(value);
      else p.fail("unknown key '" + key + "' in [loss]");
    } else if (p.section == "trainer") {
      if (key == "mode") cfg.trainer.mode = train_mode_from(value);
      else if (key == "steps") cfg.trainer.steps = p.integer(value);
      else if (key == "batchGroups") cfg.trainer.batch_groups = p.integer(value);
      else if (key == "effectiveBatch") cfg.trainer.effective_batch = p.integer(value);
      else if (key == "lr") cfg.trainer.adam.lr = p.num(value);
      else if (key == "beta1") cfg.trainer.adam.beta1 = p.num(value);
      else if (key == "beta2") cfg.trainer.adam.beta2 = p.num(value);
      else if (key == "eps") cfg.trainer.adam.eps = p.num(value);
      else if (key == "initSeed") cfg.trainer.init_seed = p.seed(value);
      else if (key == "dataSeed") cfg.trainer.data_seed = p.seed(value);
      else if (key == "cropSeed") cfg.trainer.crop_seed = p.seed(value);
      else if (key == "evalEvery") cfg.trainer.eval_every = p.integer(value);
      else if (key == "cropResize") cfg.trainer.crop_resize = resize_mode_from(value);
      else p.fail("unknown key '" + key + "' in [trainer]");
    } else if (p.section == "eval") {
      if (key == "split") cfg.eval_split = value;
      else p.fail("unknown key '" + key + "' in [eval]");
    }
  }
  if (current_stylizer) flush_stylizer(pending, current_stylizer_split);

  if (saw_stylizer) {
    if (train.empty()) throw ConfigError("config registry needs at least one train stylizer");
    if (heldout.empty()) throw ConfigError("config registry needs at least one heldout stylizer");
    if (val.size() != 1) throw ConfigError("config registry needs exactly one val stylizer");
    cfg.registry.train = std::move(train);
    cfg.registry.heldout = std::move(heldout);
    cfg.registry.validation = std::move(val.front());
  }
  cfg.registry.validate();
  cfg.trainer.net.num_classes = cfg.scene.num_classes;
  return cfg;
}

ExperimentConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config: " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::string canonical_config(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "[scene]\n";
  os << "width = " << cfg.scene.width << "\n";
  os << "height = " << cfg.scene.height << "\n";
  os << "numClasses = " << cfg.scene.num_classes << "\n";
  os << "layoutSeed = " << cfg.scene.layout_seed << "\n";
  os << "clutter = " << fmt_double(cfg.scene.clutter) << "\n";
  os << "trainSamples = " << cfg.counts.train << "\n";
  os << "valSamples = " << cfg.counts.val << "\n";
  os << "testSamples = " << cfg.counts.test << "\n";
  os << "\n[network]\n";
  os << "channelsBase = " << cfg.trainer.net.channels_base << "\n";
  os << "depth = " << cfg.trainer.net.depth << "\n";
  os << "tapCount = " << cfg.trainer.net.tap_count << "\n";
  os << "\n[loss]\n";
  os << "lambdas = ";
  for (size_t i = 0; i < cfg.trainer.loss.lambdas.size(); ++i) {
    if (i) os << ",";
    os << fmt_double(cfg.trainer.loss.lambdas[i]);
  }
  os << "\n";
  os << "pciWeight = " << fmt_double(cfg.trainer.loss.pci_weight) << "\n";
  os << "beta = " << fmt_double(cfg.trainer.loss.beta) << "\n";
  os << "rhoMin = " << fmt_double(cfg.trainer.loss.rho_min) << "\n";
  os << "rhoMax = " << fmt_double(cfg.trainer.loss.rho_max) << "\n";
  os << "ignoreIndex = " << cfg.trainer.loss.ignore_index << "\n";
  os << "\n[trainer]\n";
  os << "mode = " << train_mode_name(cfg.trainer.mode) << "\n";
  os << "steps = " << cfg.trainer.steps << "\n";
  os << "batchGroups = " << cfg.trainer.batch_groups << "\n";
  os << "effectiveBatch = " << cfg.trainer.effective_batch << "\n";
  os << "lr = " << fmt_double(cfg.trainer.adam.lr) << "\n";
  os << "beta1 = " << fmt_double(cfg.trainer.adam.beta1) << "\n";
  os << "beta2 = " << fmt_double(cfg.trainer.adam.beta2) << "\n";
  os << "eps = " << fmt_double(cfg.trainer.adam.eps) << "\n";
  os << "initSeed = " << cfg.trainer.init_seed << "\n";
  os << "dataSeed = " << cfg.trainer.data_seed << "\n";
  os << "cropSeed = " << cfg.trainer.crop_seed << "\n";
  os << "evalEvery = " << cfg.trainer.eval_every << "\n";
  os << "cropResize = " << resize_mode_name(cfg.trainer.crop_resize) << "\n";
  os << "\n[eval]\n";
  os << "split = " << cfg.eval_split << "\n";
  auto emit_stylizer = [&os](const Stylizer& s, const char* split) {
    os << "\n[stylizer." << s.id << "]\n";
    os << "split = " << split << "\n";
    os << "hue = " << fmt_double(s.hue_deg) << "\n";
    os << "sat = " << fmt_double(s.saturation) << "\n";
    os << "contrast = " << fmt_double(s.contrast) << "\n";
    os << "brightness = " << fmt_double(s.brightness) << "\n";
    os << "gray = " << fmt_double(s.grayscale) << "\n";
    os << "noiseAmp = " << fmt_double(s.noise_amp) << "\n";
    os << "noiseSeed = " << s.noise_seed << "\n";
  };
  for (const Stylizer& s : cfg.registry.train) emit_stylizer(s, "train");
  for (const Stylizer& s : cfg.registry.heldout) emit_stylizer(s, "heldout");
  emit_stylizer(cfg.registry.validation, "val");
  return os.str();
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string text = canonical_config(cfg);
  uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void apply_seed_override(ExperimentConfig& cfg) {
  const char* env = std::getenv("DRPC_SEED");
  if (!env || !*env) return;
  uint64_t seed = 0;
  try {
    seed = std::stoull(env);
  } catch (const std::exception&) {
    throw ConfigError("DRPC_SEED must be a non-negative integer, got '" + std::string(env) + "'");
  }
  cfg.scene.layout_seed = mix_seed(seed, 0);
  cfg.trainer.init_seed = mix_seed(seed, 1);
  cfg.trainer.data_seed = mix_seed(seed, 2);
  cfg.trainer.crop_seed = mix_seed(seed, 3);
}

}  // namespace drpc
