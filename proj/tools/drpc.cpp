#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "drpc/config.hpp"
#include "drpc/tensor_io.hpp"

namespace fs = std::filesystem;
using namespace drpc;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumeric = 2;
constexpr int kExitIo = 3;

const std::vector<std::string> kClassNames = {"sky",        "road", "building",
                                              "vegetation", "car",  "sidewalk"};

ExperimentConfig load_config_opt(const std::string& path) {
  ExperimentConfig cfg = path.empty() ? default_config() : load_config_file(path);
  apply_seed_override(cfg);
  return cfg;
}

int guarded(const std::function<void()>& body) {
  try {
    body();
    return kExitOk;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

std::vector<uint64_t> parse_seed_list(const std::string& csv) {
  std::vector<uint64_t> seeds;
  std::istringstream is(csv);
  std::string item;
  while (std::getline(is, item, ',')) {
    if (!item.empty()) seeds.push_back(std::stoull(item));
  }
  if (seeds.empty()) throw ConfigError("--seeds needs a comma-separated list");
  return seeds;
}

std::vector<std::string> parse_domain_list(const std::string& csv) {
  std::vector<std::string> out;
  std::istringstream is(csv);
  std::string item;
  while (std::getline(is, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
}

int checkpoint_classes_in_dataset(const fs::path& dataset_root) {
  const fs::path snap = dataset_root / "gen.config.snapshot";
  if (!fs::exists(snap)) return -1;
  std::ifstream is(snap);
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str()).scene.num_classes;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"drpc - domain-randomized segmentation training at desk scale"};
  app.require_subcommand(1);

  std::string config_path, out_path, data_path, mode_str, checkpoint_path, domains_csv,
      seeds_csv = "1,2,3,4,5";
  int samples = -1;
  int workers = 0;
  int preview_count = 0;
  long long seed_flag = -1;
  bool force = false, ppm = false;

  auto* gen = app.add_subcommand("gen-data", "generate a multi-domain scene dataset");
  gen->add_option("--config", config_path, "experiment config file");
  gen->add_option("--out", out_path, "output dataset directory")->required();
  gen->add_option("--samples", samples, "override [scene] trainSamples");
  gen->add_option("--seed", seed_flag, "override [scene] layoutSeed");
  gen->add_flag("--force", force, "allow writing into a non-empty directory");

  auto* train_cmd = app.add_subcommand("train", "train one model");
  train_cmd->add_option("--config", config_path, "experiment config file");
  train_cmd->add_option("--mode", mode_str, "baseline|dr|dr_pcd|dr_pci|full");
  train_cmd->add_option("--data", data_path, "dataset directory")->required();
  train_cmd->add_option("--out", out_path, "run directory")->required();

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on test domains");
  eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint directory")->required();
  eval_cmd->add_option("--dataset", data_path, "dataset directory")->required();
  eval_cmd->add_option("--domains", domains_csv, "comma-separated domain ids (default: all test)");
  eval_cmd->add_option("--out", out_path, "report output directory");

  auto* ablate_cmd = app.add_subcommand("ablate", "run the five-arm ablation");
  ablate_cmd->add_option("--config", config_path, "experiment config file");
  ablate_cmd->add_option("--data", data_path, "dataset directory")->required();
  ablate_cmd->add_option("--seeds", seeds_csv, "comma-separated seed list");
  ablate_cmd->add_option("--out", out_path, "output directory")->required();
  ablate_cmd->add_option("--workers", workers, "parallel training runs (default: cores)");

  auto* preview = app.add_subcommand("stylize-preview", "dump before/after stylizer pairs");
  preview->add_option("--config", config_path, "experiment config file");
  preview->add_option("--out", out_path, "output directory")->required();
  preview->add_option("--count", preview_count, "limit the number of stylizers");
  preview->add_flag("--ppm", ppm, "also write PPM images");

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    return guarded([&] {
      ExperimentConfig cfg = load_config_opt(config_path);
      if (samples >= 0) cfg.counts.train = samples;
      if (seed_flag >= 0) cfg.scene.layout_seed = static_cast<uint64_t>(seed_flag);
      const fs::path root(out_path);
      if (fs::exists(root) && !fs::is_empty(root) && !force) {
        throw IoError("output directory " + root.string() +
                      " is not empty; pass --force to overwrite");
      }
      fs::create_directories(root);
      const Dataset ds = generate_dataset(cfg.scene, cfg.registry, cfg.counts, root);
      write_text(root / "gen.config.snapshot", canonical_config(cfg));
      std::cout << "dataset: " << ds.entries.size() << " manifest rows, config hash "
                << config_hash(cfg) << "\n";
      const auto hist = class_histogram(ds, "train");
      std::cout << "train class histogram:\n";
      for (const auto& [cls, count] : hist) {
        const std::string name =
            cls < static_cast<int>(kClassNames.size()) ? kClassNames[cls] : std::to_string(cls);
        std::cout << "  " << name << ": " << count << "\n";
      }
    });
  }

  if (train_cmd->parsed()) {
    return guarded([&] {
      ExperimentConfig cfg = load_config_opt(config_path);
      if (!mode_str.empty()) cfg.trainer.mode = train_mode_from(mode_str);
      const Dataset ds = load_dataset(data_path);
      const std::string snapshot = canonical_config(cfg);
      const TrainResult res = train(cfg.trainer, ds, cfg.registry, out_path, snapshot);
      write_text(fs::path(out_path) / "config.hash", config_hash(cfg) + "\n");
      std::cout << "trained " << res.steps_run << " steps (" << train_mode_name(cfg.trainer.mode)
                << "), checkpoint at " << res.checkpoint_dir.string() << "\n";
      if (res.final_val_miou >= 0.0) {
        std::cout << "final val mIoU: " << res.final_val_miou << "\n";
      }
    });
  }

  if (eval_cmd->parsed()) {
    return guarded([&] {
      const Dataset ds = load_dataset(data_path);
      SegNetwork net = SegNetwork::load_checkpoint(checkpoint_path);
      const int ds_classes = checkpoint_classes_in_dataset(ds.root);
      if (ds_classes > 0 && ds_classes != net.config().num_classes) {
        throw ConfigError("checkpoint has " + std::to_string(net.config().num_classes) +
                          " classes but the dataset was generated with " +
                          std::to_string(ds_classes));
      }
      std::vector<std::string> domains = parse_domain_list(domains_csv);
      if (domains.empty()) domains = ds.domains("test");
      if (domains.empty()) throw ConfigError("dataset has no test domains");
      const MetricReport report = evaluate(net, ds, "test", domains);
      std::cout << report.to_csv(kClassNames);
      std::cout << "G_perf: " << report.g_perf << "\n";
      if (!out_path.empty()) {
        fs::create_directories(out_path);
        report.write(fs::path(out_path) / "metrics.json", fs::path(out_path) / "metrics.csv",
                     kClassNames);
      }
    });
  }

  if (ablate_cmd->parsed()) {
    return guarded([&] {
      ExperimentConfig cfg = load_config_opt(config_path);
      const Dataset ds = load_dataset(data_path);
      const std::vector<uint64_t> seeds = parse_seed_list(seeds_csv);
      fs::create_directories(out_path);
      write_text(fs::path(out_path) / "config.snapshot", canonical_config(cfg));
      const AblationReport report =
          ablate(cfg.trainer, ds, cfg.registry, seeds, fs::path(out_path) / "runs", workers);
      write_text(fs::path(out_path) / "ablation.json", report.to_json());
      write_text(fs::path(out_path) / "ablation.csv", report.to_csv());
      std::cout << report.to_csv();
      std::cout << "note: " << report.note << "\n";
    });
  }

  if (preview->parsed()) {
    return guarded([&] {
      ExperimentConfig cfg = load_config_opt(config_path);
      fs::create_directories(out_path);
      const RenderedSample scene = render_scene(cfg.scene, 0);
      Tensor before = Tensor::from_array(scene.image.shape(), scene.image.array() / 255.0);
      save_tensor(scene.image, fs::path(out_path) / "source.tsr", Dtype::kU8);
      if (ppm) save_ppm(before, fs::path(out_path) / "source.ppm");
      int n = 0;
      for (const Stylizer& s : cfg.registry.train) {
        if (preview_count > 0 && n >= preview_count) break;
        const Tensor after = apply(s, before);
        Eigen::ArrayXd q = (after.array() * 255.0).round();
        save_tensor(Tensor::from_array(after.shape(), std::move(q)),
                    fs::path(out_path) / (s.id + ".tsr"), Dtype::kU8);
        if (ppm) save_ppm(after, fs::path(out_path) / (s.id + ".ppm"));
        ++n;
      }
      std::cout << "wrote " << n << " stylizer previews to " << out_path << "\n";
    });
  }

  return kExitUsage;
}
