#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "lumos/metrics.hpp"

using namespace lumos;

namespace {

// all-pairs boundary oracle, deliberately free of the production kernels
double hd95_brute(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b,
                  int h, int w) {
  auto boundary = [&](const std::vector<uint8_t>& m) {
    std::vector<std::pair<int, int>> pts;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (!m[(size_t)y * w + x]) continue;
        const bool edge = y == 0 || x == 0 || y == h - 1 || x == w - 1 ||
                          !m[(size_t)(y - 1) * w + x] || !m[(size_t)(y + 1) * w + x] ||
                          !m[(size_t)y * w + x - 1] || !m[(size_t)y * w + x + 1];
        if (edge) pts.emplace_back(x, y);
      }
    return pts;
  };
  const auto pa = boundary(a), pb = boundary(b);
  if (pa.empty() || pb.empty()) return kHd95Undefined;
  std::vector<double> d;
  auto directed = [&](const auto& s, const auto& t) {
    for (const auto& p : s) {
      double best = 1e30;
      for (const auto& q : t) {
        const double dx = p.first - q.first, dy = p.second - q.second;
        best = std::min(best, dx * dx + dy * dy);
      }
      d.push_back(std::sqrt(best));
    }
  };
  directed(pa, pb);
  directed(pb, pa);
  std::sort(d.begin(), d.end());
  const double r = 0.95 * (double)(d.size() - 1);
  const size_t lo = (size_t)r;
  const double f = r - (double)lo;
  if (lo + 1 >= d.size()) return d.back();
  return d[lo] + f * (d[lo + 1] - d[lo]);
}

LabelMap map_of(std::vector<uint8_t> data, int h, int w, int level = 0) {
  LabelMap m;
  m.data = std::move(data);
  m.h = h;
  m.w = w;
  m.level = level;
  return m;
}

std::string tmp_file(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("dsc on canonical mask pairs") {
  CHECK(dsc({1, 1, 1, 0}, {1, 1, 1, 0}) == doctest::Approx(1.0));
  CHECK(dsc({1, 1, 0, 0}, {0, 0, 1, 1}) == doctest::Approx(0.0));
  CHECK(dsc({1, 1, 0, 0}, {0, 1, 0, 1}) == doctest::Approx(0.5));
  // both masks empty counts as a perfect match
  CHECK(dsc({0, 0, 0, 0}, {0, 0, 0, 0}) == doctest::Approx(1.0));
  // one empty mask scores zero
  CHECK(dsc({1, 0, 0, 0}, {0, 0, 0, 0}) == doctest::Approx(0.0));
}

TEST_CASE("dsc is symmetric") {
  std::mt19937 eng(7);
  for (int t = 0; t < 50; ++t) {
    std::vector<uint8_t> a(64), b(64);
    for (auto& v : a) v = eng() % 2;
    for (auto& v : b) v = eng() % 2;
    CHECK(dsc(a, b) == doctest::Approx(dsc(b, a)));
  }
  CHECK_THROWS_AS((void)dsc({1, 0}, {1, 0, 0}), std::exception);
}

TEST_CASE("hd95 fixed cases") {
  const int h = 8, w = 8;
  std::vector<uint8_t> p((size_t)h * w, 0), g((size_t)h * w, 0);
  p[2 * w + 2] = 1;
  g[2 * w + 2] = 1;
  CHECK(hd95(p, g, h, w) == doctest::Approx(0.0));

  g[2 * w + 2] = 0;
  g[2 * w + 5] = 1;  // two single pixels 3 px apart
  CHECK(hd95(p, g, h, w) == doctest::Approx(3.0));

  // empty mask on either side is the undefined sentinel
  std::fill(g.begin(), g.end(), 0);
  CHECK(hd95(p, g, h, w) == kHd95Undefined);
  CHECK(hd95(g, p, h, w) == kHd95Undefined);
  std::fill(p.begin(), p.end(), 0);
  CHECK(hd95(p, g, h, w) == kHd95Undefined);
}

TEST_CASE("hd95 is symmetric and bounded by the max boundary distance") {
  std::mt19937 eng(31);
  for (int t = 0; t < 30; ++t) {
    std::vector<uint8_t> a(256), b(256);
    for (auto& v : a) v = eng() % 3 == 0;
    for (auto& v : b) v = eng() % 3 == 0;
    const double ab = hd95(a, b, 16, 16);
    const double ba = hd95(b, a, 16, 16);
    CHECK(ab == doctest::Approx(ba));
    if (ab != kHd95Undefined) {
      // 95th percentile can never exceed the diagonal of the image
      CHECK(ab <= std::sqrt(2.0) * 16.0);
      CHECK(ab >= 0.0);
    }
  }
}

TEST_CASE("hd95 agrees with the all-pairs oracle on random masks") {
  std::mt19937 eng(99);
  for (int t = 0; t < 100; ++t) {
    std::vector<uint8_t> a(256), b(256);
    for (auto& v : a) v = eng() % 3 == 0;
    for (auto& v : b) v = eng() % 3 == 0;
    const double got = hd95(a, b, 16, 16);
    const double want = hd95_brute(a, b, 16, 16);
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("evaluate scores a perfect prediction as 100 DSC and 0 HD95") {
  const Schema schema = default_schema();
  LabelMap gt = map_of(std::vector<uint8_t>((size_t)16 * 16, 0), 16, 16);
  // one class band per row y <= 8, class 8 below, background on the left edge
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      gt.data[(size_t)y * 16 + x] = x == 0 ? kBackground : (uint8_t)std::min(y, 8);
  const MetricsReport r = evaluate({gt}, {gt}, schema, 0);
  CHECK(r.level == 0);
  CHECK(r.classes == 9);
  CHECK(r.samples == 1);
  REQUIRE(r.rows.size() == 9);
  CHECK(r.mean_dsc == doctest::Approx(100.0));
  CHECK(r.std_dsc == doctest::Approx(0.0));
  CHECK(r.mean_hd95 == doctest::Approx(0.0));
  CHECK(r.hd95_undefined_count == 0);
}

TEST_CASE("evaluate produces one row per sample and class") {
  const Schema schema = default_schema();
  std::mt19937 eng(5);
  std::vector<LabelMap> preds, gts;
  for (int s = 0; s < 3; ++s) {
    std::vector<uint8_t> p(64), g(64);
    for (auto& v : p) v = (uint8_t)(eng() % 10 == 9 ? kBackground : eng() % 9);
    for (auto& v : g) v = (uint8_t)(eng() % 10 == 9 ? kBackground : eng() % 9);
    preds.push_back(map_of(std::move(p), 8, 8));
    gts.push_back(map_of(std::move(g), 8, 8));
  }
  const MetricsReport r = evaluate(preds, gts, schema, 0);
  CHECK(r.samples == 3);
  REQUIRE((int)r.rows.size() == 3 * 9);
  for (int s = 0; s < 3; ++s)
    for (int c = 0; c < 9; ++c) {
      const auto& row = r.rows[(size_t)(s * 9 + c)];
      CHECK(row.sample == s);
      CHECK(row.cls == c);
      CHECK(row.dsc_pct >= 0.0);
      CHECK(row.dsc_pct <= 100.0);
    }
  CHECK((int)r.class_mean_dsc.size() == 9);
  CHECK((int)r.class_mean_hd95.size() == 9);

  // the aggregate mean matches recomputing from rows
  double mean = 0;
  for (const auto& row : r.rows) mean += row.dsc_pct;
  mean /= (double)r.rows.size();
  CHECK(r.mean_dsc == doctest::Approx(mean));
}

TEST_CASE("evaluate merges base predictions to a coarser scoring level") {
  const Schema schema = default_schema();
  // prediction and truth differ at base level but agree after merging when
  // the disagreement stays inside one coarse group
  std::vector<uint8_t> p(64, 0), g(64, 0);
  for (int i = 0; i < 64; ++i) {
    const bool inside = i % 8 >= 2;
    // mid5 group 0 is base {0,1}: predict 0 where truth says 1
    p[(size_t)i] = inside ? 0 : kBackground;
    g[(size_t)i] = inside ? 1 : kBackground;
  }
  // classes 0 and 1 both score 0 (disjoint masks); the 7 empty/empty classes
  // score 100 by the both-empty convention
  const MetricsReport base = evaluate({map_of(p, 8, 8)}, {map_of(g, 8, 8)}, schema, 0);
  CHECK(base.mean_dsc == doctest::Approx(700.0 / 9.0));
  const MetricsReport mid = evaluate({map_of(p, 8, 8)}, {map_of(g, 8, 8)}, schema, 1);
  CHECK(mid.classes == 5);
  // after merging, group 0 is identical; the other groups are empty/empty
  CHECK(mid.mean_dsc == doctest::Approx(100.0));
}

TEST_CASE("evaluate counts undefined HD95 cells instead of averaging them") {
  const Schema schema = default_schema();
  // truth has class 0 only; classes 1..8 are empty in both masks
  std::vector<uint8_t> g(64, kBackground), p(64, kBackground);
  for (int i = 0; i < 8; ++i) {
    g[(size_t)i] = 0;
    p[(size_t)i] = 0;
  }
  const MetricsReport r = evaluate({map_of(p, 8, 8)}, {map_of(g, 8, 8)}, schema, 0);
  CHECK(r.hd95_undefined_count == 8);
  CHECK(r.mean_hd95 == doctest::Approx(0.0));  // only class 0 contributes
  for (int c = 1; c < 9; ++c) CHECK(std::isnan(r.class_mean_hd95[(size_t)c]));
  // the empty-everywhere classes still score DSC 100
  CHECK(r.mean_dsc == doctest::Approx(100.0));
}

TEST_CASE("evaluate validates its inputs") {
  const Schema schema = default_schema();
  const LabelMap a = map_of(std::vector<uint8_t>(64, 0), 8, 8);
  const LabelMap b = map_of(std::vector<uint8_t>(16, 0), 4, 4);
  CHECK_THROWS_AS((void)evaluate({a}, {b}, schema, 0), std::exception);
  CHECK_THROWS_AS((void)evaluate({a}, {a, a}, schema, 0), std::exception);
  CHECK_THROWS_AS((void)evaluate({}, {}, schema, 0), std::exception);
  CHECK_THROWS_AS((void)evaluate({a}, {a}, schema, 7), std::exception);
}

TEST_CASE("report files carry the undefined marker and round-trip numbers") {
  const Schema schema = default_schema();
  std::vector<uint8_t> g(64, kBackground), p(64, kBackground);
  for (int i = 0; i < 8; ++i) {
    g[(size_t)i] = 0;
    p[(size_t)(i + 8)] = 0;
  }
  const MetricsReport r = evaluate({map_of(p, 8, 8)}, {map_of(g, 8, 8)}, schema, 0);

  const std::string csv_path = tmp_file("metrics_test.csv");
  write_report_csv(r, csv_path);
  std::ifstream cf(csv_path);
  REQUIRE(cf.good());
  std::stringstream css;
  css << cf.rdbuf();
  const std::string csv = css.str();
  CHECK(csv.find("sample") != std::string::npos);
  CHECK(csv.find("undefined") != std::string::npos);
  // one header plus one line per row
  CHECK((size_t)std::count(csv.begin(), csv.end(), '\n') == r.rows.size() + 1);

  const std::string json_path = tmp_file("metrics_test.json");
  write_report_json(r, schema, json_path);
  std::ifstream jf(json_path);
  REQUIRE(jf.good());
  nlohmann::json j;
  jf >> j;
  CHECK(j["level"] == "base9");
  CHECK(j["mean_dsc"].get<double>() == doctest::Approx(r.mean_dsc));
  CHECK(j["samples"] == 1);
  CHECK(j["hd95_undefined_count"].get<int>() == r.hd95_undefined_count);

  std::filesystem::remove(csv_path);
  std::filesystem::remove(json_path);
}

}  // TEST_SUITE
