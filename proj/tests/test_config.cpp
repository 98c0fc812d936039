#include <doctest.h>

#include <cstdlib>
#include <random>
#include <sstream>

#include "drpc/config.hpp"
#include "drpc/rng.hpp"

using namespace drpc;

TEST_CASE("the canonical form is a fixpoint of parsing") {
  const ExperimentConfig cfg = default_config();
  const std::string canon = canonical_config(cfg);
  const ExperimentConfig reparsed = parse_config(canon);
  CHECK(canonical_config(reparsed) == canon);
  CHECK(config_hash(reparsed) == config_hash(cfg));
  CHECK(config_hash(cfg).size() == 16);
}

TEST_CASE("defaults follow the documented schedule") {
  const ExperimentConfig cfg = default_config();
  CHECK(cfg.trainer.loss.lambdas == std::vector<double>{0.2, 0.4, 0.6, 0.8, 1.0});
  CHECK(cfg.trainer.loss.beta == 1.0);
  CHECK(cfg.trainer.loss.pci_weight == 1.0);
  CHECK(cfg.trainer.loss.rho_min == 0.5);
  CHECK(cfg.trainer.loss.rho_max == 0.9);
  CHECK(cfg.trainer.loss.ignore_index == 255);
  CHECK(cfg.trainer.adam.lr == 1e-3);
  CHECK(cfg.trainer.adam.beta1 == 0.9);
  CHECK(cfg.trainer.adam.beta2 == 0.999);
  CHECK(cfg.trainer.adam.eps == 1e-8);
  CHECK(cfg.scene.width == 64);
  CHECK(cfg.scene.num_classes == 6);
  CHECK(cfg.registry.train.size() == 15);
  CHECK(cfg.registry.heldout.size() == 3);
  CHECK(cfg.trainer.steps == 2000);
  CHECK(cfg.trainer.net.channels_base == 8);
  CHECK(cfg.trainer.net.depth == 3);
  CHECK(cfg.trainer.net.tap_count == 5);
}

TEST_CASE("keys override defaults and values are type-checked") {
  const ExperimentConfig cfg = parse_config(
      "[scene]\n"
      "width = 32\n"
      "height = 32\n"
      "# a comment\n"
      "[trainer]\n"
      "mode = dr_pci\n"
      "steps = 7\n"
      "lr = 0.01\n"
      "cropResize = nearest\n"
      "[loss]\n"
      "lambdas = 1, 2, 3\n");
  CHECK(cfg.scene.width == 32);
  CHECK(cfg.trainer.mode == TrainMode::kDrPci);
  CHECK(cfg.trainer.steps == 7);
  CHECK(cfg.trainer.adam.lr == 0.01);
  CHECK(cfg.trainer.crop_resize == ResizeMode::kNearest);
  CHECK(cfg.trainer.loss.lambdas == std::vector<double>{1, 2, 3});

  CHECK_THROWS_WITH_AS(parse_config("[trainer]\nsteps = many\n"),
                       doctest::Contains("line 2"), ConfigError);
}

TEST_CASE("unknown sections and keys are named with their line") {
  CHECK_THROWS_WITH_AS(parse_config("[scene]\nwidth = 64\nbogus = 1\n"),
                       doctest::Contains("bogus"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("[scene]\nwidth = 64\nbogus = 1\n"),
                       doctest::Contains("line 3"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("[warp]\nspeed = 9\n"), doctest::Contains("[warp]"),
                       ConfigError);
  CHECK_THROWS_AS(parse_config("width = 64\n"), ConfigError);  // key before any section
}

TEST_CASE("a config fuzz pass rejects random key mutations") {
  const std::string canon = canonical_config(default_config());
  std::mt19937_64 rng(77);
  int rejected = 0;
  for (int trial = 0; trial < 20; ++trial) {
    // mangle one random key line
    std::vector<std::string> lines;
    std::istringstream is(canon);
    std::string line;
    while (std::getline(is, line)) lines.push_back(line);
    size_t target = 0;
    do {
      target = static_cast<size_t>(uniform_int(rng, 0, static_cast<int>(lines.size()) - 1));
    } while (lines[target].find('=') == std::string::npos);
    lines[target] = "mut" + lines[target];
    std::string text;
    for (const std::string& l : lines) text += l + "\n";
    try {
      parse_config(text);
    } catch (const ConfigError& e) {
      ++rejected;
      CHECK(std::string(e.what()).find("line") != std::string::npos);
    }
  }
  CHECK(rejected == 20);
}

TEST_CASE("stylizer sections replace the default registry") {
  const std::string text =
      "[stylizer.red]\n"
      "split = train\n"
      "hue = 90\n"
      "[stylizer.dim]\n"
      "split = heldout\n"
      "contrast = 0.8\n"
      "[stylizer.check]\n"
      "split = val\n"
      "sat = 1.2\n";
  const ExperimentConfig cfg = parse_config(text);
  REQUIRE(cfg.registry.train.size() == 1);
  CHECK(cfg.registry.train[0].id == "red");
  CHECK(cfg.registry.train[0].hue_deg == 90.0);
  CHECK(cfg.registry.heldout[0].id == "dim");
  CHECK(cfg.registry.validation.id == "check");

  CHECK_THROWS_AS(parse_config("[stylizer.x]\nsplit = train\n"), ConfigError);  // no heldout/val
  CHECK_THROWS_AS(parse_config("[stylizer.x]\nsplit = nowhere\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[stylizer.x]\nhue = bad\nsplit = train\n"), ConfigError);
}

TEST_CASE("DRPC_SEED overrides the seed triple") {
  ExperimentConfig cfg = default_config();
  const uint64_t init0 = cfg.trainer.init_seed;
  setenv("DRPC_SEED", "123", 1);
  apply_seed_override(cfg);
  unsetenv("DRPC_SEED");
  CHECK(cfg.trainer.init_seed != init0);
  ExperimentConfig cfg2 = default_config();
  setenv("DRPC_SEED", "123", 1);
  apply_seed_override(cfg2);
  unsetenv("DRPC_SEED");
  CHECK(cfg.trainer.init_seed == cfg2.trainer.init_seed);
  CHECK(cfg.trainer.data_seed == cfg2.trainer.data_seed);

  setenv("DRPC_SEED", "not_a_number", 1);
  ExperimentConfig cfg3 = default_config();
  CHECK_THROWS_AS(apply_seed_override(cfg3), ConfigError);
  unsetenv("DRPC_SEED");
}
