#include "lumos/config.hpp"

#include <fstream>
#include <stdexcept>

namespace lumos {
namespace {

[[noreturn]] void fail(const std::string& what) {
  throw std::runtime_error("config: " + what);
}

bool same_kind(const nlohmann::json& a, const nlohmann::json& b) {
  if (a.is_number() && b.is_number()) return true;  // int vs float unify
  return a.type() == b.type();
}

// Overlays src onto dst. Objects recurse; scalars and arrays replace whole.
void merge_strict(nlohmann::json& dst, const nlohmann::json& src, const std::string& at) {
  if (!src.is_object()) fail("expected an object at '" + (at.empty() ? "<root>" : at) + "'");
  for (auto it = src.begin(); it != src.end(); ++it) {
    const std::string key = at.empty() ? it.key() : at + "." + it.key();
    if (!dst.contains(it.key())) fail("unknown key '" + key + "'");
    nlohmann::json& d = dst[it.key()];
    if (d.is_object()) {
      merge_strict(d, it.value(), key);
    } else {
      if (!same_kind(d, it.value())) {
        fail("value for '" + key + "' has the wrong type (expected " + std::string(d.type_name()) + ")");
      }
      d = it.value();
    }
  }
}

}  // namespace

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["data"] = {
      {"dir", cfg.data_dir},
      {"image_size", cfg.synth.image_size},
      {"base_classes", cfg.synth.base_classes},
      {"boundary_amplitude", cfg.synth.boundary_amplitude},
      {"layer_means", cfg.synth.layer_means},
      {"layer_std", cfg.synth.layer_std},
      {"background_mean", cfg.synth.background_mean},
      {"mean_jitter", cfg.synth.mean_jitter},
      {"band_jitter", cfg.synth.band_jitter},
      {"speckle", cfg.synth.speckle},
      {"seed", cfg.synth.seed},
      {"n_labeled", cfg.data_spec.n_labeled},
      {"n_unlabeled", cfg.data_spec.n_unlabeled},
      {"n_val", cfg.data_spec.n_val},
      {"n_test", cfg.data_spec.n_test},
      {"labeled_level", cfg.data_spec.labeled_level},
      {"labeled_levels", cfg.data_spec.labeled_levels},
  };
  j["model"] = {
      {"base_width", cfg.model.base_width},   {"stages", cfg.model.stages},
      {"tf_blocks", cfg.model.tf_blocks},     {"heads", cfg.model.heads},
      {"prompt_layers", cfg.model.prompt_layers}, {"out_channels", cfg.model.out_channels},
  };
  j["schedule"] = {
      {"total_iterations", cfg.total_iterations},
      {"boundaries", cfg.boundaries},
      {"base_lr", cfg.base_lr},
      {"power", cfg.power},
  };
  j["train"] = {
      {"batch_size", cfg.batch_size},
      {"labeled_fraction", cfg.labeled_fraction},
      {"ablation", cfg.ablation},
      {"seed", cfg.seed},
      {"eval_interval", cfg.eval_interval},
      {"checkpoint_interval", cfg.checkpoint_interval},
      {"out_dir", cfg.out_dir},
  };
  return j;
}

ExperimentConfig config_from_json(const nlohmann::json& full) {
  // Overlay onto defaults so partial configs work and unknown keys throw.
  nlohmann::json j = config_to_json(ExperimentConfig{});
  merge_strict(j, full, "");

  ExperimentConfig cfg;
  try {
    const auto& d = j.at("data");
    cfg.data_dir = d.at("dir").get<std::string>();
    cfg.synth.image_size = d.at("image_size").get<int>();
    cfg.synth.base_classes = d.at("base_classes").get<int>();
    cfg.synth.boundary_amplitude = d.at("boundary_amplitude").get<double>();
    cfg.synth.layer_means = d.at("layer_means").get<std::vector<double>>();
    cfg.synth.layer_std = d.at("layer_std").get<double>();
    cfg.synth.background_mean = d.at("background_mean").get<double>();
    cfg.synth.mean_jitter = d.at("mean_jitter").get<double>();
    cfg.synth.band_jitter = d.at("band_jitter").get<double>();
    cfg.synth.speckle = d.at("speckle").get<double>();
    cfg.synth.seed = d.at("seed").get<uint64_t>();
    cfg.data_spec.n_labeled = d.at("n_labeled").get<int>();
    cfg.data_spec.n_unlabeled = d.at("n_unlabeled").get<int>();
    cfg.data_spec.n_val = d.at("n_val").get<int>();
    cfg.data_spec.n_test = d.at("n_test").get<int>();
    cfg.data_spec.labeled_level = d.at("labeled_level").get<std::string>();
    cfg.data_spec.labeled_levels = d.at("labeled_levels").get<std::vector<std::string>>();

    const auto& m = j.at("model");
    cfg.model.base_width = m.at("base_width").get<int>();
    cfg.model.stages = m.at("stages").get<int>();
    cfg.model.tf_blocks = m.at("tf_blocks").get<int>();
    cfg.model.heads = m.at("heads").get<int>();
    cfg.model.prompt_layers = m.at("prompt_layers").get<int>();
    cfg.model.out_channels = m.at("out_channels").get<int>();
    cfg.model.base_classes = cfg.synth.base_classes;

    const auto& s = j.at("schedule");
    cfg.total_iterations = s.at("total_iterations").get<int>();
    cfg.boundaries = s.at("boundaries").get<std::vector<double>>();
    cfg.base_lr = s.at("base_lr").get<double>();
    cfg.power = s.at("power").get<double>();

    const auto& t = j.at("train");
    cfg.batch_size = t.at("batch_size").get<int>();
    cfg.labeled_fraction = t.at("labeled_fraction").get<double>();
    cfg.ablation = t.at("ablation").get<std::string>();
    cfg.seed = t.at("seed").get<uint64_t>();
    cfg.eval_interval = t.at("eval_interval").get<int>();
    cfg.checkpoint_interval = t.at("checkpoint_interval").get<int>();
    cfg.out_dir = t.at("out_dir").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("bad value: ") + e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail("cannot open '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    fail("parse error in '" + path + "': " + e.what());
  }
  return config_from_json(j);
}

void apply_override(nlohmann::json& j, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    fail("override '" + assignment + "' is not of the form key.path=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);

  nlohmann::json* node = &j;
  size_t start = 0;
  while (true) {
    const size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
    if (!node->is_object() || !node->contains(key)) {
      fail("override addresses unknown key '" + path + "'");
    }
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (node->is_object()) fail("override '" + path + "' addresses a section, not a value");

  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;  // unquoted strings stay strings
  if (!same_kind(*node, value)) {
    fail("override '" + path + "' has the wrong type (expected " + std::string(node->type_name()) + ")");
  }
  *node = value;
}

}  // namespace lumos
