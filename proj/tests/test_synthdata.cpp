#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "doctest.h"
#include "lumos/dataio.hpp"
#include "lumos/synthdata.hpp"

using namespace lumos;
namespace fs = std::filesystem;

namespace {

struct TmpDir {
  fs::path path;
  explicit TmpDir(const char* name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
  }
  ~TmpDir() { fs::remove_all(path); }
};

}  // namespace

TEST_SUITE("synthdata") {

TEST_CASE("generate_sample is a pure function of seed and index") {
  SyntheticConfig cfg;
  cfg.image_size = 96;
  const Sample a = generate_sample(cfg, 5);
  const Sample b = generate_sample(cfg, 5);
  CHECK(a.image == b.image);
  CHECK(a.label.data == b.label.data);
  CHECK(a.id == b.id);

  const Sample c = generate_sample(cfg, 6);
  CHECK(a.image != c.image);
  CHECK(a.id != c.id);

  SyntheticConfig other = cfg;
  other.seed = cfg.seed + 1;
  const Sample d = generate_sample(other, 5);
  CHECK(a.image != d.image);
}

TEST_CASE("samples are well formed: range, labels, and band structure") {
  SyntheticConfig cfg;
  cfg.image_size = 96;
  for (int64_t idx : {0, 3, 11}) {
    const Sample s = generate_sample(cfg, idx);
    REQUIRE((int)s.image.size() == 96 * 96);
    REQUIRE(s.label.h == 96);
    REQUIRE(s.label.w == 96);
    CHECK(s.label.level == 0);

    for (float v : s.image) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }

    // every base class must be present with a usable mass of pixels
    std::vector<int> count(9, 0);
    for (uint8_t l : s.label.data) {
      const bool valid = l < 9 || l == kBackground;
      CHECK(valid);
      if (l < 9) ++count[(size_t)l];
    }
    for (int c = 0; c < 9; ++c) CHECK(count[(size_t)c] >= 2 * 96);

    // bands stack top to bottom: walking down any column, class ids never
    // decrease, and background appears only above band 0 or below band 8
    for (int x = 0; x < 96; ++x) {
      int prev = -1;
      for (int y = 0; y < 96; ++y) {
        const uint8_t l = s.label.at(y, x);
        if (l == kBackground) {
          CHECK((prev == -1 || prev == 8));
          continue;
        }
        CHECK((int)l >= prev);
        prev = l;
      }
    }
  }
}

TEST_CASE("config validation names the violated constraint") {
  SyntheticConfig cfg;
  cfg.image_size = 64;  // 64/9 bands undulating by 2.5 px dip below 2 px
  try {
    validate_config(cfg);
    FAIL("expected a thickness error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("thickness") != std::string::npos);
  }

  cfg = SyntheticConfig{};
  cfg.image_size = 100;  // not divisible by 32
  CHECK_THROWS_AS(validate_config(cfg), std::exception);

  cfg = SyntheticConfig{};
  cfg.layer_means = {0.5, 0.5};  // wrong count for 9 classes
  CHECK_THROWS_AS(validate_config(cfg), std::exception);

  cfg = SyntheticConfig{};
  cfg.speckle = -0.1;
  CHECK_THROWS_AS(validate_config(cfg), std::exception);

  CHECK(default_layer_means(9).size() == 9);
}

TEST_CASE("dataset directory round-trips through the loader") {
  TmpDir dir("lumos_test_synthds");
  SyntheticConfig cfg;
  cfg.image_size = 96;
  const Schema schema = default_schema();
  DatasetSpec spec;
  spec.n_labeled = 4;
  spec.n_unlabeled = 6;
  spec.n_val = 2;
  spec.n_test = 2;
  spec.labeled_levels = {"base9", "mid5", "coarse3", "base9"};
  generate_dataset(cfg, schema, spec, dir.path.string());

  CHECK(fs::exists(dir.path / "manifest.json"));
  CHECK(fs::exists(dir.path / "schema.json"));

  const Dataset ds = load_dataset(dir.path.string(), 96);
  CHECK(ds.size == 96);
  REQUIRE(ds.labeled.size() == 4);
  CHECK(ds.unlabeled.size() == 6);
  CHECK(ds.val.size() == 2);
  CHECK(ds.test.size() == 2);

  // per-sample label levels follow the overrides
  std::map<std::string, int> level_of;
  for (const auto& s : ds.labeled) level_of[s.id] = s.level;
  CHECK(level_of.at("s00000") == 0);
  CHECK(level_of.at("s00001") == 1);
  CHECK(level_of.at("s00002") == 2);
  CHECK(level_of.at("s00003") == 0);

  // coarse labels on disk are merges of the generator's base labels
  const Sample raw = generate_sample(cfg, 1);
  const LabelMap want = merge_labels(raw.label, 1, schema);
  const auto& got = ds.labeled[1];
  CHECK(got.id == "s00001");
  CHECK(got.label.data == want.data);

  // val and test labels stay at base level
  for (const auto& s : ds.val) CHECK(s.level == 0);
  for (const auto& s : ds.test) CHECK(s.level == 0);

  // unlabeled samples carry no label
  for (const auto& s : ds.unlabeled) CHECK(s.label.data.empty());

  // sample ids never collide across splits
  std::vector<std::string> ids;
  for (const auto* split : {&ds.labeled, &ds.unlabeled, &ds.val, &ds.test})
    for (const auto& s : *split) ids.push_back(s.id);
  std::sort(ids.begin(), ids.end());
  CHECK(std::adjacent_find(ids.begin(), ids.end()) == ids.end());
}

TEST_CASE("generate_dataset validates the spec") {
  TmpDir dir("lumos_test_synthbad");
  SyntheticConfig cfg;
  cfg.image_size = 96;
  const Schema schema = default_schema();

  DatasetSpec spec;
  spec.labeled_levels = {"base9"};  // size 1 != n_labeled
  CHECK_THROWS_AS(generate_dataset(cfg, schema, spec, dir.path.string()), std::exception);

  spec = DatasetSpec{};
  spec.labeled_level = "nope";
  CHECK_THROWS_AS(generate_dataset(cfg, schema, spec, dir.path.string()), std::exception);

  spec = DatasetSpec{};
  spec.n_labeled = 0;
  CHECK_THROWS_AS(generate_dataset(cfg, schema, spec, dir.path.string()), std::exception);
}

}  // TEST_SUITE
