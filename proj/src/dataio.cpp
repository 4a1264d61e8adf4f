#include "lumos/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>

#include "json.hpp"
#include "lumos/pngio.hpp"

namespace lumos {

namespace {

namespace fs = std::filesystem;

[[noreturn]] void fail(const std::string& what) {
  throw std::runtime_error("dataset: " + what);
}

// bilinear, align_corners=false, arbitrary scale
std::vector<float> resize_bilinear(const std::vector<float>& src, int h, int w,
                                   int oh, int ow) {
  if (h == oh && w == ow) return src;
  std::vector<float> out((size_t)oh * ow);
  const double sy = (double)h / oh;
  const double sx = (double)w / ow;
  for (int y = 0; y < oh; ++y) {
    const double fy = (y + 0.5) * sy - 0.5;
    int y0 = (int)std::floor(fy);
    const double wy = fy - y0;
    int y1 = y0 + 1;
    y0 = std::clamp(y0, 0, h - 1);
    y1 = std::clamp(y1, 0, h - 1);
    for (int x = 0; x < ow; ++x) {
      const double fx = (x + 0.5) * sx - 0.5;
      int x0 = (int)std::floor(fx);
      const double wx = fx - x0;
      int x1 = x0 + 1;
      x0 = std::clamp(x0, 0, w - 1);
      x1 = std::clamp(x1, 0, w - 1);
      const double v =
          (1 - wy) * ((1 - wx) * src[(size_t)y0 * w + x0] + wx * src[(size_t)y0 * w + x1]) +
          wy * ((1 - wx) * src[(size_t)y1 * w + x0] + wx * src[(size_t)y1 * w + x1]);
      out[(size_t)y * ow + x] = (float)v;
    }
  }
  return out;
}

void standardize(std::vector<float>& img) {
  double sum = 0.0;
  for (float v : img) sum += v;
  const double mu = sum / img.size();
  double var = 0.0;
  for (float v : img) var += (v - mu) * (v - mu);
  var /= img.size();
  const double inv = 1.0 / std::sqrt(var + 1e-6);
  for (float& v : img) v = (float)((v - mu) * inv);
}

DatasetSample load_sample(const fs::path& dir, const std::string& id,
                          bool labeled, int level, int group_count,
                          int target_size) {
  DatasetSample s;
  s.id = id;
  const fs::path img_path = dir / "images" / (id + ".png");
  if (!fs::exists(img_path)) fail("missing image file for sample '" + id + "'");
  GrayImage img = read_png_gray8(img_path.string());
  const int size = target_size > 0 ? target_size : img.w;
  s.image = preprocess_image(img.pixels, img.h, img.w, size);

  if (labeled) {
    const fs::path lbl_path = dir / "labels" / (id + ".png");
    if (!fs::exists(lbl_path)) fail("missing label file for sample '" + id + "'");
    GrayImage lbl = read_png_gray8(lbl_path.string());
    if (lbl.h != img.h || lbl.w != img.w)
      fail("label/image size mismatch for sample '" + id + "'");
    LabelMap lm;
    lm.h = lbl.h;
    lm.w = lbl.w;
    lm.level = level;
    lm.data = std::move(lbl.pixels);
    for (uint8_t v : lm.data)
      if (v != kBackground && v >= group_count)
        fail("label value " + std::to_string((int)v) + " exceeds the " +
             std::to_string(group_count) + "-group level in sample '" + id + "'");
    s.label = resize_label_nn(lm, size);
    s.has_label = true;
    s.level = level;
  }
  return s;
}

}  // namespace

std::vector<float> preprocess_image(const std::vector<uint8_t>& pixels, int h,
                                    int w, int target_size) {
  if (h <= 0 || w <= 0 || (int64_t)pixels.size() != (int64_t)h * w)
    fail("preprocess expects a 2-D grayscale image");
  std::vector<float> img(pixels.size());
  for (size_t i = 0; i < img.size(); ++i) img[i] = pixels[i] / 255.0f;
  img = resize_bilinear(img, h, w, target_size, target_size);
  standardize(img);
  return img;
}

LabelMap resize_label_nn(const LabelMap& label, int target_size) {
  if (label.h == target_size && label.w == target_size) return label;
  LabelMap out;
  out.h = target_size;
  out.w = target_size;
  out.level = label.level;
  out.data.resize((size_t)target_size * target_size);
  for (int y = 0; y < target_size; ++y) {
    // same grid mapping as the bilinear path, snapped to the nearest source px
    const int sy = std::clamp(
        (int)std::floor((y + 0.5) * (double)label.h / target_size), 0, label.h - 1);
    for (int x = 0; x < target_size; ++x) {
      const int sx = std::clamp(
          (int)std::floor((x + 0.5) * (double)label.w / target_size), 0, label.w - 1);
      out.data[(size_t)y * target_size + x] = label.at(sy, sx);
    }
  }
  return out;
}

Dataset load_dataset(const std::string& dir, int target_size) {
  const fs::path root(dir);
  std::ifstream mf(root / "manifest.json");
  if (!mf) fail("missing manifest.json in '" + dir + "'");
  nlohmann::json manifest;
  try {
    mf >> manifest;
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("manifest parse failure: ") + e.what());
  }

  Dataset ds;
  const std::string schema_rel = manifest.value("schema", std::string("schema.json"));
  ds.schema = load_schema((root / schema_rel).string());

  const std::string labeled_level_name =
      manifest.value("labeled_level", ds.schema.level_name(0));
  const int default_level = ds.schema.level_index(labeled_level_name);

  std::map<std::string, std::string> overrides;
  if (manifest.contains("level_overrides"))
    for (auto it = manifest["level_overrides"].begin();
         it != manifest["level_overrides"].end(); ++it)
      overrides[it.key()] = it.value().get<std::string>();

  auto ids = [&](const char* key) {
    std::vector<std::string> v;
    if (manifest.contains(key))
      for (const auto& j : manifest[key]) v.push_back(j.get<std::string>());
    return v;
  };

  int probe_size = target_size;
  for (const std::string& id : ids("labeled")) {
    int level = default_level;
    auto it = overrides.find(id);
    if (it != overrides.end()) level = ds.schema.level_index(it->second);
    ds.labeled.push_back(load_sample(root, id, true, level,
                                     ds.schema.group_count(level), probe_size));
  }
  for (const std::string& id : ids("unlabeled"))
    ds.unlabeled.push_back(load_sample(root, id, false, 0, 0, probe_size));
  for (const std::string& id : ids("val"))
    ds.val.push_back(load_sample(root, id, true, 0, ds.schema.group_count(0), probe_size));
  for (const std::string& id : ids("test"))
    ds.test.push_back(load_sample(root, id, true, 0, ds.schema.group_count(0), probe_size));

  if (ds.labeled.empty()) fail("empty labeled split");
  // all splits share one resolution
  const size_t n0 = ds.labeled[0].image.size();
  ds.size = (int)std::lround(std::sqrt((double)n0));
  for (const auto* split : {&ds.labeled, &ds.unlabeled, &ds.val, &ds.test})
    for (const DatasetSample& s : *split)
      if (s.image.size() != n0) fail("inconsistent image sizes across samples");
  return ds;
}

AugmentDraws draw_augment(Rng& rng) {
  AugmentDraws d;
  d.flip = rng.uniform() < 0.5;
  d.noise_sigma = rng.uniform(0.0, 0.05);
  d.brightness = rng.uniform(-0.2, 0.2);
  d.contrast = rng.uniform(0.8, 1.2);
  return d;
}

void apply_augment(std::vector<float>& image, LabelMap* label, int h, int w,
                   const AugmentDraws& draws, Rng& rng) {
  if (draws.flip) {
    for (int y = 0; y < h; ++y) {
      float* row = image.data() + (size_t)y * w;
      std::reverse(row, row + w);
      if (label) {
        uint8_t* lrow = label->data.data() + (size_t)y * w;
        std::reverse(lrow, lrow + w);
      }
    }
  }
  for (float& v : image)
    v = (float)((v + draws.noise_sigma * rng.normal()) * draws.contrast +
                draws.brightness);
}

BatchIds draw_batch(const Dataset& ds, int batch_size, double labeled_fraction,
                    Rng& rng) {
  if (ds.labeled.empty()) fail("cannot draw batches from an empty labeled pool");
  int n_lab = (int)std::lround(batch_size * labeled_fraction);
  n_lab = std::clamp(n_lab, 0, batch_size);
  if (ds.unlabeled.empty()) n_lab = batch_size;
  if (n_lab == 0) fail("labeled_fraction rounds to zero labeled samples");
  BatchIds b;
  for (int i = 0; i < n_lab; ++i)
    b.labeled.push_back((int)rng.uniform_int((int64_t)ds.labeled.size()));
  for (int i = n_lab; i < batch_size; ++i)
    b.unlabeled.push_back((int)rng.uniform_int((int64_t)ds.unlabeled.size()));
  return b;
}

}  // namespace lumos
