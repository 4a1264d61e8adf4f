#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lumos/granularity.hpp"

namespace lumos {

// Value reported for HD95 when either mask is empty; excluded from means.
constexpr double kHd95Undefined = -1.0;

double dsc(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& gt);

// 95th percentile (linear interpolation) of the combined directed
// boundary-to-boundary distance multiset. Boundary = mask pixel with a
// 4-neighbor outside the mask; the image border counts as outside.
double hd95(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& gt,
            int h, int w);

struct SampleClassRow {
  int sample = 0;
  int cls = 0;
  double dsc_pct = 0.0;      // percent
  double hd95_px = 0.0;      // kHd95Undefined when either mask is empty
};

struct MetricsReport {
  int level = 0;
  int classes = 0;
  int samples = 0;
  std::vector<SampleClassRow> rows;  // samples * classes entries
  std::vector<double> class_mean_dsc;   // percent, per class
  std::vector<double> class_mean_hd95;  // px, NaN when every sample undefined
  double mean_dsc = 0.0, std_dsc = 0.0;
  double mean_hd95 = 0.0, std_hd95 = 0.0;
  int hd95_undefined_count = 0;
};

// Merges both label maps to `level` and scores every class of that level.
// Aggregate mean/std run over all (sample, class) cells; HD95 cells with an
// empty mask are excluded from the mean and counted instead.
MetricsReport evaluate(const std::vector<LabelMap>& predictions,
                       const std::vector<LabelMap>& ground_truth,
                       const Schema& schema, int level);

void write_report_csv(const MetricsReport& r, const std::string& path);
void write_report_json(const MetricsReport& r, const Schema& schema,
                       const std::string& path);

}  // namespace lumos
