#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace lumos {

// One run's evaluation summary (the JSON file written next to a metrics
// report), labeled so comparison tables can name their rows.
struct RunSummary {
  std::string name;
  nlohmann::json data;
};

// Reads a summary JSON; the run name is the containing directory (or the
// file stem when the file is not inside a named run directory).
RunSummary load_summary(const std::string& path);

// Rows = runs; columns = per-class DSC, then overall DSC and HD95 as
// mean ± std. With two or more rows the best entry per column is flagged
// with '*' (highest DSC, lowest HD95). All summaries must agree on the
// level and per-class key set.
std::string comparison_table(const std::vector<RunSummary>& runs);
void write_comparison_csv(const std::vector<RunSummary>& runs, const std::string& path);

// Curves parsed from one training log (JSON lines).
struct LogCurves {
  std::string name;
  std::vector<double> iters, l_total;   // one point per iteration
  std::vector<double> eval_iters, dsc;  // one point per validation pass
};
LogCurves read_train_log(const std::string& path);

// Static SVG line charts, one file each; multiple runs overlay with a
// legend. Output bytes are deterministic for identical inputs.
void write_loss_plot(const std::vector<LogCurves>& runs, const std::string& path);
void write_dsc_plot(const std::vector<LogCurves>& runs, const std::string& path);

}  // namespace lumos
