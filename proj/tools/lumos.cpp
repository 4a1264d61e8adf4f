// lumos: synthetic-benchmark pipeline driver.
//
//   lumos gen-data  --config cfg.json --out data/synth
//   lumos train     --config cfg.json --ablation full --seed 3 --out runs/full-s3
//   lumos eval      runs/full-s3/last.ckpt --level coarse3 --out runs/full-s3
//   lumos report    runs/*/report.json runs/*/train_log.jsonl --out runs/summary
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lumos/checkpoint.hpp"
#include "lumos/config.hpp"
#include "lumos/report.hpp"
#include "lumos/synthdata.hpp"
#include "lumos/trainer.hpp"

namespace {

// --config file first, then --set overrides, then dedicated flags
nlohmann::json resolve_config(const std::string& config_path,
                              const std::vector<std::string>& sets) {
  nlohmann::json j = config_path.empty()
                         ? lumos::config_to_json(lumos::ExperimentConfig{})
                         : lumos::config_to_json(lumos::load_config(config_path));
  for (const std::string& s : sets) lumos::apply_override(j, s);
  return j;
}

int run_gen_data(const std::string& config_path, const std::vector<std::string>& sets,
                 uint64_t seed, bool seed_given, const std::string& out) {
  nlohmann::json j = resolve_config(config_path, sets);
  if (seed_given) j["data"]["seed"] = seed;
  if (!out.empty()) j["data"]["dir"] = out;
  const lumos::ExperimentConfig cfg = lumos::config_from_json(j);
  lumos::validate_config(cfg.synth);
  const lumos::Schema schema = lumos::default_schema();
  if (cfg.synth.base_classes != schema.base_classes) {
    throw std::runtime_error("gen-data: the built-in hierarchy covers " +
                             std::to_string(schema.base_classes) + " base classes, got " +
                             std::to_string(cfg.synth.base_classes));
  }
  lumos::generate_dataset(cfg.synth, schema, cfg.data_spec, cfg.data_dir);
  std::printf("wrote dataset to %s (%d labeled / %d unlabeled / %d val / %d test)\n",
              cfg.data_dir.c_str(), cfg.data_spec.n_labeled, cfg.data_spec.n_unlabeled,
              cfg.data_spec.n_val, cfg.data_spec.n_test);
  return 0;
}

int run_train(const std::string& config_path, const std::vector<std::string>& sets,
              uint64_t seed, bool seed_given, const std::string& ablation,
              const std::string& out, const std::string& resume) {
  nlohmann::json j = resolve_config(config_path, sets);
  if (seed_given) j["train"]["seed"] = seed;
  if (!ablation.empty()) j["train"]["ablation"] = ablation;
  if (!out.empty()) j["train"]["out_dir"] = out;
  const lumos::ExperimentConfig cfg = lumos::config_from_json(j);
  lumos::parse_ablation(cfg.ablation);  // reject bad modes before loading data

  const lumos::Dataset ds = lumos::load_dataset(cfg.data_dir, cfg.synth.image_size);
  lumos::Trainer trainer(cfg, ds);
  const lumos::TrainResult r = trainer.train(resume);
  std::printf("trained %d iterations (%s): final loss %.6f, best val DSC %.2f\n",
              cfg.total_iterations, cfg.ablation.c_str(), r.final_loss, r.best_val_dsc);
  std::printf("log:        %s\n", r.log_path.c_str());
  std::printf("checkpoint: %s\n", r.final_checkpoint.c_str());
  if (!r.best_checkpoint.empty()) std::printf("best:       %s\n", r.best_checkpoint.c_str());
  return 0;
}

int run_eval(const std::string& ckpt_path, const std::string& data_dir,
             const std::string& level_name, const std::string& out) {
  const lumos::Checkpoint c = lumos::load_checkpoint(ckpt_path);
  const lumos::ExperimentConfig cfg = lumos::config_from_json(c.config);
  const std::string dir = data_dir.empty() ? cfg.data_dir : data_dir;
  const lumos::Dataset ds = lumos::load_dataset(dir, cfg.synth.image_size);
  const int level = level_name.empty() ? 0 : ds.schema.level_index(level_name);

  const lumos::MetricsReport rep = lumos::evaluate_checkpoint(ckpt_path, ds, level);
  const std::string out_dir =
      out.empty() ? std::filesystem::path(ckpt_path).parent_path().string() : out;
  std::filesystem::create_directories(out_dir.empty() ? "." : out_dir);
  const std::string base = (out_dir.empty() ? "." : out_dir) + "/report";
  lumos::write_report_csv(rep, base + ".csv");
  lumos::write_report_json(rep, ds.schema, base + ".json");
  std::printf("level %s over %d test samples: DSC %.2f +- %.2f, HD95 %.2f +- %.2f\n",
              ds.schema.level_name(level).c_str(), rep.samples, rep.mean_dsc, rep.std_dsc,
              rep.mean_hd95, rep.std_hd95);
  std::printf("report: %s.csv %s.json\n", base.c_str(), base.c_str());
  return 0;
}

int run_report(const std::vector<std::string>& inputs, const std::string& out) {
  std::vector<lumos::RunSummary> summaries;
  std::vector<lumos::LogCurves> logs;
  for (const std::string& p : inputs) {
    if (p.size() > 6 && p.substr(p.size() - 6) == ".jsonl")
      logs.push_back(lumos::read_train_log(p));
    else
      summaries.push_back(lumos::load_summary(p));
  }
  std::filesystem::create_directories(out);
  if (!summaries.empty()) {
    const std::string table = lumos::comparison_table(summaries);
    std::fputs(table.c_str(), stdout);
    std::ofstream tf(out + "/table.txt");
    if (!tf) throw std::runtime_error("report: cannot write " + out + "/table.txt");
    tf << table;
    lumos::write_comparison_csv(summaries, out + "/table.csv");
    std::printf("table: %s/table.txt %s/table.csv\n", out.c_str(), out.c_str());
  }
  if (!logs.empty()) {
    lumos::write_loss_plot(logs, out + "/loss.svg");
    bool any_eval = false;
    for (const lumos::LogCurves& l : logs) any_eval |= !l.eval_iters.empty();
    if (any_eval) lumos::write_dsc_plot(logs, out + "/dsc.svg");
    std::printf("plots: %s/loss.svg%s\n", out.c_str(), any_eval ? (" " + out + "/dsc.svg").c_str() : "");
  }
  if (summaries.empty() && logs.empty()) throw std::runtime_error("report: no inputs");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"layered-image semi-supervised segmentation benchmark"};
  app.require_subcommand(1);

  std::string config_path, ablation, out, resume, data_dir, level_name, ckpt_path;
  std::vector<std::string> sets, inputs;
  uint64_t seed = 0;

  CLI::App* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
  gen->add_option("--config", config_path, "experiment config JSON");
  gen->add_option("--set", sets, "override, dotted.path=value")->take_all();
  CLI::Option* gen_seed = gen->add_option("--seed", seed, "generator seed");
  gen->add_option("--out", out, "output dataset directory");

  CLI::App* train = app.add_subcommand("train", "train a model");
  train->add_option("--config", config_path, "experiment config JSON");
  train->add_option("--set", sets, "override, dotted.path=value")->take_all();
  CLI::Option* train_seed = train->add_option("--seed", seed, "training seed");
  train->add_option("--ablation", ablation,
                    "supervised | a1|teacher_student_A1 | a2|mutual_A2 | rlrw|+RLRW | full|+RLRW+MPF");
  train->add_option("--out", out, "run output directory");
  train->add_option("--resume", resume, "checkpoint to resume from");

  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  ev->add_option("checkpoint", ckpt_path, "checkpoint file")->required();
  ev->add_option("--data", data_dir, "dataset directory (default: the one trained on)");
  ev->add_option("--level", level_name, "granularity level name (default: base)");
  ev->add_option("--out", out, "report output directory (default: checkpoint's)");

  CLI::App* rep = app.add_subcommand("report", "comparison table and curve plots");
  rep->add_option("inputs", inputs, "summary .json and/or train log .jsonl files")
      ->required()
      ->expected(-1);
  rep->add_option("--out", out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (gen->parsed()) return run_gen_data(config_path, sets, seed, !gen_seed->empty(), out);
    if (train->parsed())
      return run_train(config_path, sets, seed, !train_seed->empty(), ablation, out, resume);
    if (ev->parsed()) return run_eval(ckpt_path, data_dir, level_name, out);
    if (rep->parsed()) return run_report(inputs, out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
