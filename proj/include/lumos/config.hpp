#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "lumos/model.hpp"
#include "lumos/synthdata.hpp"

namespace lumos {

// Everything one run needs, grouped the way the JSON config file is. The
// JSON form is also what checkpoints echo, so resume can reject mismatches.
struct ExperimentConfig {
  // data
  std::string data_dir = "data/synth";
  SyntheticConfig synth;
  DatasetSpec data_spec;

  // model
  ModelConfig model;

  // schedule
  int total_iterations = 2000;
  std::vector<double> boundaries;  // empty = equal-length stages
  double base_lr = 3e-4;
  double power = 0.9;

  // train
  int batch_size = 8;
  double labeled_fraction = 0.5;
  std::string ablation = "full";
  uint64_t seed = 1;
  int eval_interval = 250;
  int checkpoint_interval = 0;  // extra periodic snapshots; 0 = final only
  std::string out_dir = "runs/out";
};

nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const nlohmann::json& j);

// Parses the file and overlays it onto defaults. Keys the default config
// does not have are rejected so typos fail loudly instead of being ignored.
ExperimentConfig load_config(const std::string& path);

// Applies one "dotted.path=value" override in place. The path must address
// an existing key and the value must parse to the same JSON kind.
void apply_override(nlohmann::json& j, const std::string& assignment);

}  // namespace lumos
