#include "lumos/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "lumos/kern/backend.hpp"

namespace lumos {

namespace {

// boundary pixel coordinates of a binary mask (4-neighbor outside, border
// counts as outside)
void boundary_points(const std::vector<uint8_t>& m, int h, int w,
                     std::vector<int32_t>& xs, std::vector<int32_t>& ys) {
  xs.clear();
  ys.clear();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!m[(size_t)y * w + x]) continue;
      const bool edge =
          y == 0 || x == 0 || y == h - 1 || x == w - 1 ||
          !m[(size_t)(y - 1) * w + x] || !m[(size_t)(y + 1) * w + x] ||
          !m[(size_t)y * w + x - 1] || !m[(size_t)y * w + x + 1];
      if (edge) {
        xs.push_back(x);
        ys.push_back(y);
      }
    }
}

double percentile95(std::vector<double>& d) {
  std::sort(d.begin(), d.end());
  const double r = 0.95 * (double)(d.size() - 1);
  const size_t lo = (size_t)r;
  const double frac = r - (double)lo;
  if (lo + 1 >= d.size()) return d.back();
  return d[lo] + frac * (d[lo + 1] - d[lo]);
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / v.size();
}

double std_of(const std::vector<double>& v, double mu) {
  if (v.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : v) s += (x - mu) * (x - mu);
  return std::sqrt(s / v.size());
}

}  // namespace

double dsc(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& gt) {
  if (pred.size() != gt.size())
    throw std::invalid_argument("dsc: mask shapes differ");
  int64_t np = 0, ng = 0, ni = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    np += pred[i] != 0;
    ng += gt[i] != 0;
    ni += (pred[i] != 0) && (gt[i] != 0);
  }
  if (np + ng == 0) return 1.0;
  return 2.0 * (double)ni / (double)(np + ng);
}

double hd95(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& gt,
            int h, int w) {
  if (pred.size() != gt.size() || (int64_t)pred.size() != (int64_t)h * w)
    throw std::invalid_argument("hd95: mask shapes differ");
  std::vector<int32_t> px, py, gx, gy;
  boundary_points(pred, h, w, px, py);
  boundary_points(gt, h, w, gx, gy);
  if (px.empty() || gx.empty()) return kHd95Undefined;

  const auto& k = kern::active();
  std::vector<int64_t> sq(std::max(px.size(), gx.size()));
  std::vector<double> dists;
  dists.reserve(px.size() + gx.size());
  k.min_sqdist((int)px.size(), px.data(), py.data(), (int)gx.size(), gx.data(),
               gy.data(), sq.data());
  for (size_t i = 0; i < px.size(); ++i) dists.push_back(std::sqrt((double)sq[i]));
  k.min_sqdist((int)gx.size(), gx.data(), gy.data(), (int)px.size(), px.data(),
               py.data(), sq.data());
  for (size_t i = 0; i < gx.size(); ++i) dists.push_back(std::sqrt((double)sq[i]));
  return percentile95(dists);
}

MetricsReport evaluate(const std::vector<LabelMap>& predictions,
                       const std::vector<LabelMap>& ground_truth,
                       const Schema& schema, int level) {
  if (predictions.size() != ground_truth.size())
    throw std::invalid_argument("evaluate: prediction/ground-truth count mismatch");
  if (predictions.empty()) throw std::invalid_argument("evaluate: no samples");
  if (level < 0 || level >= schema.level_count())
    throw std::invalid_argument("evaluate: level " + std::to_string(level) +
                                " outside the schema's " +
                                std::to_string(schema.level_count()) + " levels");
  MetricsReport r;
  r.level = level;
  r.classes = schema.group_count(level);
  r.samples = (int)predictions.size();
  r.class_mean_dsc.assign(r.classes, 0.0);
  r.class_mean_hd95.assign(r.classes, 0.0);
  std::vector<int> class_hd_n(r.classes, 0);
  std::vector<double> all_dsc, all_hd;

  for (int s = 0; s < r.samples; ++s) {
    const LabelMap pm = merge_labels(predictions[s], level, schema);
    const LabelMap gm = merge_labels(ground_truth[s], level, schema);
    if (pm.h != gm.h || pm.w != gm.w)
      throw std::invalid_argument("evaluate: sample " + std::to_string(s) +
                                  " prediction/ground-truth sizes differ");
    if (pm.data.size() != (size_t)pm.h * pm.w || gm.data.size() != (size_t)gm.h * gm.w)
      throw std::invalid_argument("evaluate: sample " + std::to_string(s) +
                                  " label data does not match its dimensions");
    const size_t n = pm.data.size();
    std::vector<uint8_t> pmask(n), gmask(n);
    for (int c = 0; c < r.classes; ++c) {
      for (size_t i = 0; i < n; ++i) {
        pmask[i] = pm.data[i] == c;
        gmask[i] = gm.data[i] == c;
      }
      SampleClassRow row;
      row.sample = s;
      row.cls = c;
      row.dsc_pct = 100.0 * dsc(pmask, gmask);
      row.hd95_px = hd95(pmask, gmask, pm.h, pm.w);
      r.rows.push_back(row);
      r.class_mean_dsc[c] += row.dsc_pct;
      all_dsc.push_back(row.dsc_pct);
      if (row.hd95_px == kHd95Undefined) {
        ++r.hd95_undefined_count;
      } else {
        r.class_mean_hd95[c] += row.hd95_px;
        ++class_hd_n[c];
        all_hd.push_back(row.hd95_px);
      }
    }
  }

  for (int c = 0; c < r.classes; ++c) {
    r.class_mean_dsc[c] /= std::max(1, r.samples);
    r.class_mean_hd95[c] = class_hd_n[c]
                               ? r.class_mean_hd95[c] / class_hd_n[c]
                               : std::nan("");
  }
  r.mean_dsc = mean_of(all_dsc);
  r.std_dsc = std_of(all_dsc, r.mean_dsc);
  r.mean_hd95 = mean_of(all_hd);
  r.std_hd95 = std_of(all_hd, r.mean_hd95);
  return r;
}

void write_report_csv(const MetricsReport& r, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("metrics: cannot write " + path);
  f << "sample,class,dsc_pct,hd95_px\n";
  for (const SampleClassRow& row : r.rows) {
    f << row.sample << ',' << row.cls << ',' << row.dsc_pct << ',';
    if (row.hd95_px == kHd95Undefined)
      f << "undefined";
    else
      f << row.hd95_px;
    f << '\n';
  }
}

void write_report_json(const MetricsReport& r, const Schema& schema,
                       const std::string& path) {
  nlohmann::json j;
  j["level"] = schema.level_name(r.level);
  j["samples"] = r.samples;
  j["mean_dsc"] = r.mean_dsc;
  j["std_dsc"] = r.std_dsc;
  j["mean_hd95"] = r.mean_hd95;
  j["std_hd95"] = r.std_hd95;
  j["hd95_undefined_count"] = r.hd95_undefined_count;
  nlohmann::json per;
  for (int c = 0; c < r.classes; ++c) {
    nlohmann::json e;
    e["mean_dsc"] = r.class_mean_dsc[c];
    if (std::isnan(r.class_mean_hd95[c]))
      e["mean_hd95"] = nullptr;
    else
      e["mean_hd95"] = r.class_mean_hd95[c];
    per["class_" + std::to_string(c)] = e;
  }
  j["per_class"] = per;
  std::ofstream f(path);
  if (!f) throw std::runtime_error("metrics: cannot write " + path);
  f << j.dump(2) << "\n";
}

}  // namespace lumos
