#include "lumos/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace lumos {
namespace {

[[noreturn]] void fail(const std::string& what) {
  throw std::runtime_error("report: " + what);
}

std::string run_name(const std::string& path) {
  namespace fs = std::filesystem;
  const fs::path p(path);
  const std::string stem = p.stem().string();
  // generic file names take their run's directory name instead
  if ((stem == "train_log" || stem == "report" || stem == "summary") && p.has_parent_path()) {
    const std::string dir = p.parent_path().filename().string();
    if (!dir.empty() && dir != ".") return dir;
  }
  return stem;
}

std::string fmt(double v, int prec = 2) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
  return buf;
}

struct Column {
  std::string header;
  std::vector<std::string> cells;
  std::vector<double> values;  // NaN = not comparable
  bool lower_is_better = false;
};

// '*' on the best value when there is a real comparison to win
void flag_best(Column& c) {
  int best = -1;
  for (size_t r = 0; r < c.values.size(); ++r) {
    if (std::isnan(c.values[r])) continue;
    if (best < 0 || (c.lower_is_better ? c.values[r] < c.values[(size_t)best]
                                       : c.values[r] > c.values[(size_t)best]))
      best = (int)r;
  }
  if (best >= 0) c.cells[(size_t)best] += "*";
}

std::vector<Column> build_columns(const std::vector<RunSummary>& runs) {
  if (runs.empty()) fail("no summaries given");
  const nlohmann::json& first = runs[0].data;
  std::vector<std::string> class_keys;
  for (auto it = first.at("per_class").begin(); it != first.at("per_class").end(); ++it)
    class_keys.push_back(it.key());
  std::sort(class_keys.begin(), class_keys.end());
  for (const RunSummary& r : runs) {
    if (r.data.at("level") != first.at("level"))
      fail("summary '" + r.name + "' is at level " + r.data.at("level").get<std::string>() +
           " but '" + runs[0].name + "' is at " + first.at("level").get<std::string>());
    if (r.data.at("per_class").size() != class_keys.size())
      fail("summary '" + r.name + "' has a different class set");
    for (const std::string& k : class_keys)
      if (!r.data.at("per_class").contains(k))
        fail("summary '" + r.name + "' is missing class key '" + k + "'");
  }

  std::vector<Column> cols;
  for (const std::string& k : class_keys) {
    Column c;
    c.header = k + " DSC";
    for (const RunSummary& r : runs) {
      const double v = r.data.at("per_class").at(k).at("mean_dsc").get<double>();
      c.cells.push_back(fmt(v));
      c.values.push_back(v);
    }
    cols.push_back(std::move(c));
  }
  Column dsc;
  dsc.header = "DSC";
  Column hd;
  hd.header = "HD95";
  hd.lower_is_better = true;
  for (const RunSummary& r : runs) {
    dsc.cells.push_back(fmt(r.data.at("mean_dsc").get<double>()) + " +- " +
                        fmt(r.data.at("std_dsc").get<double>()));
    dsc.values.push_back(r.data.at("mean_dsc").get<double>());
    if (r.data.at("mean_hd95").is_null()) {
      hd.cells.push_back("undef");
      hd.values.push_back(std::nan(""));
    } else {
      hd.cells.push_back(fmt(r.data.at("mean_hd95").get<double>()) + " +- " +
                         fmt(r.data.at("std_hd95").get<double>()));
      hd.values.push_back(r.data.at("mean_hd95").get<double>());
    }
  }
  cols.push_back(std::move(dsc));
  cols.push_back(std::move(hd));
  if (runs.size() >= 2)
    for (Column& c : cols) flag_best(c);
  return cols;
}

}  // namespace

RunSummary load_summary(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail("cannot open summary '" + path + "'");
  RunSummary r;
  r.name = run_name(path);
  try {
    r.data = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    fail("parse error in '" + path + "': " + e.what());
  }
  for (const char* key : {"level", "mean_dsc", "std_dsc", "mean_hd95", "std_hd95", "per_class"})
    if (!r.data.contains(key)) fail("summary '" + path + "' is missing key '" + std::string(key) + "'");
  return r;
}

std::string comparison_table(const std::vector<RunSummary>& runs) {
  const std::vector<Column> cols = build_columns(runs);
  size_t name_w = 3;
  for (const RunSummary& r : runs) name_w = std::max(name_w, r.name.size());
  std::vector<size_t> widths;
  for (const Column& c : cols) {
    size_t w = c.header.size();
    for (const std::string& s : c.cells) w = std::max(w, s.size());
    widths.push_back(w);
  }
  std::ostringstream os;
  os << "level: " << runs[0].data.at("level").get<std::string>() << "\n";
  os << std::string(name_w, ' ');
  for (size_t c = 0; c < cols.size(); ++c)
    os << "  " << std::string(widths[c] - cols[c].header.size(), ' ') << cols[c].header;
  os << "\n";
  for (size_t r = 0; r < runs.size(); ++r) {
    os << runs[r].name << std::string(name_w - runs[r].name.size(), ' ');
    for (size_t c = 0; c < cols.size(); ++c)
      os << "  " << std::string(widths[c] - cols[c].cells[r].size(), ' ') << cols[c].cells[r];
    os << "\n";
  }
  return os.str();
}

void write_comparison_csv(const std::vector<RunSummary>& runs, const std::string& path) {
  const std::vector<Column> cols = build_columns(runs);
  std::ofstream os(path);
  if (!os) fail("cannot write '" + path + "'");
  os << "run";
  for (const Column& c : cols) os << "," << c.header;
  os << "\n";
  for (size_t r = 0; r < runs.size(); ++r) {
    os << runs[r].name;
    for (const Column& c : cols) os << "," << c.cells[r];
    os << "\n";
  }
}

LogCurves read_train_log(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail("cannot open log '" + path + "'");
  LogCurves lc;
  lc.name = run_name(path);
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded())
      fail("bad JSON on line " + std::to_string(lineno) + " of '" + path + "'");
    if (!j.contains("iter")) continue;  // header
    if (j.contains("l_total")) {
      lc.iters.push_back(j.at("iter").get<double>());
      lc.l_total.push_back(j.at("l_total").get<double>());
    } else if (j.contains("mean_dsc")) {
      lc.eval_iters.push_back(j.at("iter").get<double>());
      lc.dsc.push_back(j.at("mean_dsc").get<double>());
    }
  }
  return lc;
}

namespace {

constexpr const char* kPalette[] = {"#1b6ca8", "#c0392b", "#27ae60", "#8e44ad",
                                    "#d68910", "#16a085", "#7f8c8d", "#2c3e50"};

std::string svg_num(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct Series {
  std::string name;
  const std::vector<double>* x;
  const std::vector<double>* y;
};

void write_chart(const std::vector<Series>& series, const std::string& title,
                 const std::string& x_label, const std::string& y_label,
                 const std::string& path) {
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool any = false;
  for (const Series& s : series)
    for (size_t i = 0; i < s.x->size(); ++i) {
      const double x = (*s.x)[i], y = (*s.y)[i];
      if (!std::isfinite(y)) continue;
      if (!any) {
        xmin = xmax = x;
        ymin = ymax = y;
        any = true;
      }
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  if (!any) fail("no plottable points for '" + path + "'");
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  const double W = 720, H = 440, L = 70, R = 20, T = 40, B = 50;
  const double pw = W - L - R, ph = H - T - B;
  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return T + (1.0 - (y - ymin) / (ymax - ymin)) * ph; };

  std::ofstream os(path);
  if (!os) fail("cannot write '" + path + "'");
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
  os << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        "font-size=\"15\">" << title << "</text>\n";
  // axes
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << T + ph
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T + ph << "\" x2=\"" << L + pw << "\" y2=\"" << T + ph
     << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 5; ++k) {
    const double xv = xmin + (xmax - xmin) * k / 5.0;
    const double yv = ymin + (ymax - ymin) * k / 5.0;
    os << "<line x1=\"" << svg_num(px(xv)) << "\" y1=\"" << T + ph << "\" x2=\"" << svg_num(px(xv))
       << "\" y2=\"" << T + ph + 5 << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << svg_num(px(xv)) << "\" y=\"" << T + ph + 20
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << svg_num(xv)
       << "</text>\n";
    os << "<line x1=\"" << L - 5 << "\" y1=\"" << svg_num(py(yv)) << "\" x2=\"" << L << "\" y2=\""
       << svg_num(py(yv)) << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << L - 9 << "\" y=\"" << svg_num(py(yv) + 4)
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << svg_num(yv)
       << "</text>\n";
  }
  os << "<text x=\"" << L + pw / 2 << "\" y=\"" << H - 12
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << x_label
     << "</text>\n";
  os << "<text x=\"18\" y=\"" << T + ph / 2
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 18 "
     << T + ph / 2 << ")\">" << y_label << "</text>\n";

  for (size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % (sizeof(kPalette) / sizeof(kPalette[0]))];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (size_t i = 0; i < series[s].x->size(); ++i) {
      const double y = (*series[s].y)[i];
      if (!std::isfinite(y)) continue;
      os << svg_num(px((*series[s].x)[i])) << "," << svg_num(py(y)) << " ";
    }
    os << "\"/>\n";
    const double ly = T + 16 + 16 * (double)s;
    os << "<line x1=\"" << L + pw - 150 << "\" y1=\"" << ly << "\" x2=\"" << L + pw - 126
       << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << L + pw - 120 << "\" y=\"" << ly + 4
       << "\" font-family=\"sans-serif\" font-size=\"11\">" << series[s].name << "</text>\n";
  }
  os << "</svg>\n";
}

}  // namespace

void write_loss_plot(const std::vector<LogCurves>& runs, const std::string& path) {
  std::vector<Series> series;
  for (const LogCurves& r : runs)
    if (!r.iters.empty()) series.push_back({r.name, &r.iters, &r.l_total});
  if (series.empty()) fail("no training-loss lines in the given logs");
  write_chart(series, "training loss", "iteration", "total loss", path);
}

void write_dsc_plot(const std::vector<LogCurves>& runs, const std::string& path) {
  std::vector<Series> series;
  for (const LogCurves& r : runs)
    if (!r.eval_iters.empty()) series.push_back({r.name, &r.eval_iters, &r.dsc});
  if (series.empty()) fail("no validation lines in the given logs");
  write_chart(series, "validation mean DSC", "iteration", "DSC (%)", path);
}

}  // namespace lumos
