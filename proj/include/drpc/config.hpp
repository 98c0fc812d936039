#pragma once

#include <filesystem>
#include <string>

#include "drpc/sceneforge.hpp"
#include "drpc/stylizer.hpp"
#include "drpc/trainer.hpp"

namespace drpc {

// Whole-experiment configuration. Sections: scene, network, loss,
// trainer, eval, plus one [stylizer.<id>] section per registry entry.
// Every key has a default; unknown keys are rejected with their line
// number. A config with no stylizer sections gets the default
// registry.
struct ExperimentConfig {
  SceneSpec scene;
  DatasetCounts counts;
  TrainConfig trainer;
  DomainRegistry registry;
  std::string eval_split = "test";
};

ExperimentConfig default_config();

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config_file(const std::filesystem::path& path);

// Fixed section/key order, all defaults materialized (including the
// full stylizer registry); parsing the canonical text reproduces the
// config exactly.
std::string canonical_config(const ExperimentConfig& cfg);

// FNV-1a 64 of the canonical text, hex; stored in run outputs as the
// reproducibility audit key.
std::string config_hash(const ExperimentConfig& cfg);

// Applies the DRPC_SEED environment override (when set) to the seed
// triple and the scene layout seed.
void apply_seed_override(ExperimentConfig& cfg);

}  // namespace drpc
