#include <cmath>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "lumos/dataio.hpp"
#include "lumos/pngio.hpp"
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

// builds the standard 4/6/2/2 96px dataset used by the loader tests
void make_dataset(const fs::path& dir) {
  SyntheticConfig cfg;
  cfg.image_size = 96;
  DatasetSpec spec;
  spec.n_labeled = 4;
  spec.n_unlabeled = 6;
  spec.n_val = 2;
  spec.n_test = 2;
  spec.labeled_levels = {"base9", "mid5", "coarse3", "base9"};
  generate_dataset(cfg, default_schema(), spec, dir.string());
}

}  // namespace

TEST_SUITE("dataio") {

TEST_CASE("preprocess standardizes to zero mean and unit variance") {
  // same-size path: no resampling, so the double-precision formula applies
  std::vector<uint8_t> px(9);
  for (int i = 0; i < 9; ++i) px[(size_t)i] = (uint8_t)(20 + 25 * i);
  const std::vector<float> got = preprocess_image(px, 3, 3, 3);
  REQUIRE(got.size() == 9);

  double mu = 0;
  for (uint8_t p : px) mu += p / 255.0;
  mu /= 9.0;
  double var = 0;
  for (uint8_t p : px) var += (p / 255.0 - mu) * (p / 255.0 - mu);
  var /= 9.0;
  for (int i = 0; i < 9; ++i) {
    const double want = (px[(size_t)i] / 255.0 - mu) / std::sqrt(var + 1e-6);
    CHECK(std::abs(got[(size_t)i] - want) < 1e-5);
  }

  double m = 0, v = 0;
  for (float x : got) m += x;
  m /= 9.0;
  for (float x : got) v += (x - m) * (x - m);
  v /= 9.0;
  CHECK(std::abs(m) < 1e-6);
  CHECK(v == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("bilinear upsample matches the hand-computed 2x2 to 4x4 case") {
  // src [[0,1],[2,3]]/3 upsampled with half-pixel centers; edges clamp
  const std::vector<uint8_t> px{0, 85, 170, 255};
  const std::vector<float> got = preprocess_image(px, 2, 2, 4);
  REQUIRE(got.size() == 16);

  const double grid[16] = {0.0, 0.25, 0.75, 1.0, 0.5,  0.75, 1.25, 1.5,
                           1.5, 1.75, 2.25, 2.5, 2.0,  2.25, 2.75, 3.0};
  double mu = 0;
  for (double g : grid) mu += g * 85.0 / 255.0;
  mu /= 16.0;
  double var = 0;
  for (double g : grid) var += (g * 85.0 / 255.0 - mu) * (g * 85.0 / 255.0 - mu);
  var /= 16.0;
  for (int i = 0; i < 16; ++i) {
    const double want = (grid[(size_t)i] * 85.0 / 255.0 - mu) / std::sqrt(var + 1e-6);
    CHECK(std::abs(got[(size_t)i] - want) < 1e-4);
  }
}

TEST_CASE("preprocess rejects inconsistent dimensions") {
  CHECK_THROWS_AS((void)preprocess_image({1, 2, 3}, 2, 2, 2), std::exception);
  CHECK_THROWS_AS((void)preprocess_image({}, 0, 0, 2), std::exception);
}

TEST_CASE("nearest-neighbor label resize keeps exact values") {
  LabelMap m;
  m.h = 2;
  m.w = 2;
  m.level = 1;
  m.data = {0, 1, 2, kBackground};
  const LabelMap up = resize_label_nn(m, 4);
  CHECK(up.level == 1);
  REQUIRE(up.h == 4);
  const std::vector<uint8_t> want{0, 0, 1, 1, 0, 0, 1, 1,
                                  2, 2, kBackground, kBackground,
                                  2, 2, kBackground, kBackground};
  CHECK(up.data == want);

  // downscale picks the covering source pixel, never blends
  const LabelMap down = resize_label_nn(up, 2);
  CHECK(down.data == m.data);
  std::set<uint8_t> values(up.data.begin(), up.data.end());
  for (uint8_t v : values) CHECK((v == 0 || v == 1 || v == 2 || v == kBackground));
}

TEST_CASE("flip augmentation is an involution and mirrors the label with the image") {
  Rng rng(4);
  const int h = 6, w = 8;
  std::vector<float> img((size_t)h * w);
  for (size_t i = 0; i < img.size(); ++i) img[i] = (float)i * 0.1f;
  LabelMap lbl;
  lbl.h = h;
  lbl.w = w;
  lbl.data.resize((size_t)h * w);
  for (size_t i = 0; i < lbl.data.size(); ++i) lbl.data[i] = (uint8_t)(i % 5);

  const std::vector<float> img0 = img;
  const std::vector<uint8_t> lbl0 = lbl.data;
  AugmentDraws d;
  d.flip = true;
  apply_augment(img, &lbl, h, w, d, rng);
  CHECK(img != img0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      CHECK(img[(size_t)y * w + x] == img0[(size_t)y * w + (w - 1 - x)]);
      CHECK(lbl.at(y, x) == lbl0[(size_t)y * w + (w - 1 - x)]);
    }
  apply_augment(img, &lbl, h, w, d, rng);
  CHECK(img == img0);
  CHECK(lbl.data == lbl0);
}

TEST_CASE("photometric augmentation applies noise, then contrast, then brightness") {
  const int h = 4, w = 4;
  std::vector<float> img((size_t)h * w);
  for (size_t i = 0; i < img.size(); ++i) img[i] = 0.25f * (float)i - 1.0f;
  const std::vector<float> img0 = img;

  AugmentDraws d;
  d.noise_sigma = 0.03;
  d.brightness = 0.1;
  d.contrast = 1.15;
  Rng rng(99);
  apply_augment(img, nullptr, h, w, d, rng);

  Rng replay(99);
  for (size_t i = 0; i < img.size(); ++i) {
    const double want = (img0[i] + 0.03 * replay.normal()) * 1.15 + 0.1;
    CHECK(std::abs(img[i] - want) < 1e-6);
  }
}

TEST_CASE("draw_augment stays inside its documented ranges") {
  Rng rng(12);
  bool flipped = false, unflipped = false;
  for (int i = 0; i < 500; ++i) {
    const AugmentDraws d = draw_augment(rng);
    flipped |= d.flip;
    unflipped |= !d.flip;
    CHECK(d.noise_sigma >= 0.0);
    CHECK(d.noise_sigma < 0.05);
    CHECK(d.brightness >= -0.2);
    CHECK(d.brightness < 0.2);
    CHECK(d.contrast >= 0.8);
    CHECK(d.contrast < 1.2);
  }
  CHECK(flipped);
  CHECK(unflipped);
}

TEST_CASE("draw_batch composition honors the labeled fraction") {
  Dataset ds;
  ds.labeled.resize(3);
  ds.unlabeled.resize(5);
  Rng rng(8);

  const BatchIds half = draw_batch(ds, 8, 0.5, rng);
  CHECK(half.labeled.size() == 4);
  CHECK(half.unlabeled.size() == 4);
  for (int i : half.labeled) {
    CHECK(i >= 0);
    CHECK(i < 3);
  }
  for (int i : half.unlabeled) {
    CHECK(i >= 0);
    CHECK(i < 5);
  }

  const BatchIds all = draw_batch(ds, 8, 1.0, rng);
  CHECK(all.labeled.size() == 8);
  CHECK(all.unlabeled.empty());

  // no unlabeled pool: the whole batch comes from the labeled split
  Dataset lab_only;
  lab_only.labeled.resize(2);
  const BatchIds forced = draw_batch(lab_only, 8, 0.5, rng);
  CHECK(forced.labeled.size() == 8);
  CHECK(forced.unlabeled.empty());

  Dataset empty;
  empty.unlabeled.resize(5);
  CHECK_THROWS_AS((void)draw_batch(empty, 8, 0.5, rng), std::exception);
  CHECK_THROWS_AS((void)draw_batch(ds, 8, 0.0, rng), std::exception);
}

TEST_CASE("loader returns every split at the requested resolution") {
  TmpDir dir("lumos_test_loader");
  make_dataset(dir.path);

  const Dataset ds = load_dataset(dir.path.string(), 48);
  CHECK(ds.size == 48);
  CHECK(ds.schema.base_classes == 9);
  for (const auto* split : {&ds.labeled, &ds.unlabeled, &ds.val, &ds.test})
    for (const auto& s : *split) CHECK(s.image.size() == 48u * 48u);
  for (const auto& s : ds.labeled) {
    CHECK(s.label.h == 48);
    CHECK(s.label.w == 48);
    CHECK(s.has_label);
  }
  for (const auto& s : ds.unlabeled) CHECK(!s.has_label);

  // target_size 0 keeps the stored 96px resolution
  const Dataset native = load_dataset(dir.path.string(), 0);
  CHECK(native.size == 96);
}

TEST_CASE("loader rejects label values outside the declared level") {
  TmpDir dir("lumos_test_badlabel");
  make_dataset(dir.path);

  // s00002 is annotated at coarse3 (groups 0..2), so 7 is out of range
  std::vector<uint8_t> bad((size_t)96 * 96, 7);
  write_png_gray8((dir.path / "labels" / "s00002.png").string(), bad.data(), 96, 96);
  try {
    (void)load_dataset(dir.path.string(), 96);
    FAIL("expected a label range error");
  } catch (const std::exception& e) {
    const std::string msg = e.what();
    CHECK(msg.find("s00002") != std::string::npos);
    CHECK(msg.find("exceeds") != std::string::npos);
  }
}

TEST_CASE("loader names the sample whose label file is missing") {
  TmpDir dir("lumos_test_missing");
  make_dataset(dir.path);
  fs::remove(dir.path / "labels" / "s00001.png");
  try {
    (void)load_dataset(dir.path.string(), 96);
    FAIL("expected a missing file error");
  } catch (const std::exception& e) {
    const std::string msg = e.what();
    CHECK(msg.find("s00001") != std::string::npos);
    CHECK(msg.find("label") != std::string::npos);
  }
}

TEST_CASE("loader rejects a directory without a manifest") {
  TmpDir dir("lumos_test_nomanifest");
  fs::create_directories(dir.path);
  CHECK_THROWS_AS((void)load_dataset(dir.path.string(), 96), std::exception);
}

TEST_CASE("loader rejects mixed native resolutions") {
  TmpDir dir("lumos_test_mixedres");
  make_dataset(dir.path);
  // replace one image with a different native size; target_size 0 keeps it
  std::vector<uint8_t> small((size_t)32 * 32, 100);
  write_png_gray8((dir.path / "images" / "s00005.png").string(), small.data(), 32, 32);
  CHECK_THROWS_AS((void)load_dataset(dir.path.string(), 0), std::exception);
}

}  // TEST_SUITE
