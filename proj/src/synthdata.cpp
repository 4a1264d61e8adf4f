#include "lumos/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "lumos/core/rng.hpp"
#include "lumos/pngio.hpp"

namespace lumos {

namespace {

namespace fs = std::filesystem;

// margin fractions drawn per sample from this range
constexpr double kMarginLo = 0.06;
constexpr double kMarginHi = 0.14;

std::string sample_id(int64_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "s%05lld", (long long)index);
  return buf;
}

}  // namespace

std::vector<double> default_layer_means(int base_classes) {
  // alternating bright/dark bands, all separated from the 0.08 background
  static const double pattern[] = {0.30, 0.55, 0.22, 0.65, 0.35,
                                   0.70, 0.28, 0.60, 0.40};
  std::vector<double> m((size_t)base_classes);
  for (int i = 0; i < base_classes; ++i) m[(size_t)i] = pattern[i % 9];
  return m;
}

void validate_config(const SyntheticConfig& cfg) {
  if (cfg.image_size < 32)
    throw std::invalid_argument("synth config: image_size must be >= 32");
  if (cfg.image_size % 32 != 0)
    throw std::invalid_argument(
        "synth config: image_size must be a multiple of 32 (the network "
        "halves resolution five times)");
  if (cfg.base_classes < 1)
    throw std::invalid_argument("synth config: base_classes must be >= 1");
  if (!cfg.layer_means.empty() && (int)cfg.layer_means.size() != cfg.base_classes)
    throw std::invalid_argument("synth config: layer_means size must equal base_classes");
  if (cfg.boundary_amplitude < 0.0)
    throw std::invalid_argument("synth config: boundary_amplitude must be >= 0");
  if (cfg.speckle < 0.0 || cfg.layer_std < 0.0 || cfg.mean_jitter < 0.0 ||
      cfg.band_jitter < 0.0)
    throw std::invalid_argument("synth config: noise levels must be >= 0");
  // worst case: both margins at the top of their range, every band at the
  // minimum; bands need 2 px plus room for two boundaries moving together
  const double usable_min = cfg.image_size * (1.0 - 2.0 * kMarginHi);
  const double t_min = 2.0 + 2.0 * cfg.boundary_amplitude;
  if (usable_min < cfg.base_classes * t_min)
    throw std::invalid_argument(
        "synth config: min-thickness constraint violated; " +
        std::to_string(cfg.base_classes) + " bands of >= " + std::to_string(t_min) +
        " px (2 px + boundary amplitude headroom) do not fit in " +
        std::to_string(usable_min) + " usable rows");
  // undulating outer boundaries must stay inside the image
  if (cfg.image_size * kMarginLo < cfg.boundary_amplitude)
    throw std::invalid_argument(
        "synth config: boundary_amplitude exceeds the minimum margin; outer "
        "bands would be clipped");
}

Sample generate_sample(const SyntheticConfig& cfg, int64_t index) {
  validate_config(cfg);
  const int H = cfg.image_size, W = cfg.image_size;
  const int C = cfg.base_classes;
  Rng rng(Rng::derive(cfg.seed, (uint64_t)index));

  // band layout: margins, then minimum thickness plus a random share of the
  // leftover per band
  const double top = H * rng.uniform(kMarginLo, kMarginHi);
  const double bottom = H * rng.uniform(kMarginLo, kMarginHi);
  const double usable = H - top - bottom;
  const double t_min = 2.0 + 2.0 * cfg.boundary_amplitude;
  const double leftover = usable - C * t_min;

  std::vector<double> share((size_t)C);
  double share_sum = 0.0;
  for (int i = 0; i < C; ++i) {
    share[(size_t)i] = rng.uniform(0.5, 1.5);
    share_sum += share[(size_t)i];
  }
  // nominal boundary rows: boundary[i] = top of band i, boundary[C] = bottom
  std::vector<double> nominal((size_t)C + 1);
  nominal[0] = top;
  for (int i = 0; i < C; ++i)
    nominal[(size_t)i + 1] =
        nominal[(size_t)i] + t_min + leftover * share[(size_t)i] / share_sum;

  // per-boundary undulation: 2..4 sinusoids, total amplitude <= cfg amplitude
  struct Wave {
    double a, freq, phase;
  };
  std::vector<std::vector<Wave>> waves((size_t)C + 1);
  for (int b = 0; b <= C; ++b) {
    const int nw = 2 + (int)rng.uniform_int(3);
    std::vector<Wave> ws((size_t)nw);
    double asum = 0.0;
    for (int k = 0; k < nw; ++k) {
      ws[(size_t)k].a = rng.uniform(0.2, 1.0);
      asum += ws[(size_t)k].a;
      ws[(size_t)k].freq = rng.uniform(0.5, 3.0);
      ws[(size_t)k].phase = rng.uniform(0.0, 2.0 * M_PI);
    }
    const double target = cfg.boundary_amplitude * rng.uniform(0.5, 1.0);
    for (auto& wv : ws) wv.a *= target / asum;
    waves[(size_t)b] = std::move(ws);
  }

  // boundary row per column
  std::vector<double> by((size_t)(C + 1) * W);
  for (int b = 0; b <= C; ++b)
    for (int x = 0; x < W; ++x) {
      double off = 0.0;
      for (const Wave& wv : waves[(size_t)b])
        off += wv.a * std::sin(2.0 * M_PI * wv.freq * x / W + wv.phase);
      by[(size_t)b * W + x] = nominal[(size_t)b] + off;
    }

  Sample s;
  s.id = sample_id(index);
  s.label.h = H;
  s.label.w = W;
  s.label.level = 0;
  s.label.data.assign((size_t)H * W, kBackground);
  s.image.assign((size_t)H * W, 0.0f);

  std::vector<double> means =
      cfg.layer_means.empty() ? default_layer_means(C) : cfg.layer_means;
  const double jitter = rng.uniform(-cfg.mean_jitter, cfg.mean_jitter);
  for (double& m : means) m += jitter;
  // independent per-band shifts change the bands' relative contrast, which
  // per-image normalization cannot undo; draws stay unconditional so the
  // stream layout does not depend on the jitter magnitude
  for (double& m : means) m += rng.uniform(-cfg.band_jitter, cfg.band_jitter);
  const double bg = cfg.background_mean + jitter;

  for (int x = 0; x < W; ++x) {
    for (int y = 0; y < H; ++y) {
      const double yc = y + 0.5;
      int cls = -1;
      if (yc >= by[x] && yc < by[(size_t)C * W + x]) {
        // bands are ordered; linear scan is fine at 9 classes
        for (int i = 0; i < C; ++i)
          if (yc >= by[(size_t)i * W + x] && yc < by[(size_t)(i + 1) * W + x]) {
            cls = i;
            break;
          }
      }
      double v = cls >= 0 ? means[(size_t)cls] : bg;
      if (cls >= 0) s.label.data[(size_t)y * W + x] = (uint8_t)cls;
      v += cfg.layer_std * rng.normal();
      v *= 1.0 + cfg.speckle * rng.normal();
      s.image[(size_t)y * W + x] = (float)std::clamp(v, 0.0, 1.0);
    }
  }
  return s;
}

void generate_dataset(const SyntheticConfig& cfg, const Schema& schema,
                      const DatasetSpec& spec, const std::string& out_dir) {
  validate_config(cfg);
  if (cfg.base_classes != schema.base_classes)
    throw std::invalid_argument("generate_dataset: config/schema class count mismatch");
  if (spec.n_labeled < 1 || spec.n_val < 1 || spec.n_test < 1 || spec.n_unlabeled < 0)
    throw std::invalid_argument(
        "generate_dataset: need n_labeled, n_val, n_test >= 1 and n_unlabeled >= 0");
  if (!spec.labeled_levels.empty() &&
      (int)spec.labeled_levels.size() != spec.n_labeled)
    throw std::invalid_argument("generate_dataset: labeled_levels size mismatch");
  const int default_level = schema.level_index(spec.labeled_level);
  (void)default_level;

  fs::create_directories(fs::path(out_dir) / "images");
  fs::create_directories(fs::path(out_dir) / "labels");
  save_schema(schema, (fs::path(out_dir) / "schema.json").string());

  auto write_image = [&](const Sample& s) {
    std::vector<uint8_t> px(s.image.size());
    for (size_t i = 0; i < px.size(); ++i)
      px[i] = (uint8_t)std::lround(std::clamp(s.image[i], 0.0f, 1.0f) * 255.0f);
    write_png_gray8((fs::path(out_dir) / "images" / (s.id + ".png")).string(),
                    px.data(), s.label.h, s.label.w);
  };
  auto write_label = [&](const Sample& s, int level) {
    LabelMap lm = level == 0 ? s.label : merge_labels(s.label, level, schema);
    write_png_gray8((fs::path(out_dir) / "labels" / (s.id + ".png")).string(),
                    lm.data.data(), lm.h, lm.w);
  };

  nlohmann::json manifest;
  manifest["labeled"] = nlohmann::json::array();
  manifest["unlabeled"] = nlohmann::json::array();
  manifest["val"] = nlohmann::json::array();
  manifest["test"] = nlohmann::json::array();
  manifest["labeled_level"] = spec.labeled_level;
  manifest["schema"] = "schema.json";
  nlohmann::json overrides = nlohmann::json::object();

  int64_t index = 0;
  for (int i = 0; i < spec.n_labeled; ++i, ++index) {
    Sample s = generate_sample(cfg, index);
    const std::string level_name =
        spec.labeled_levels.empty() ? spec.labeled_level : spec.labeled_levels[(size_t)i];
    write_image(s);
    write_label(s, schema.level_index(level_name));
    manifest["labeled"].push_back(s.id);
    if (level_name != spec.labeled_level) overrides[s.id] = level_name;
  }
  for (int i = 0; i < spec.n_unlabeled; ++i, ++index) {
    Sample s = generate_sample(cfg, index);
    write_image(s);
    manifest["unlabeled"].push_back(s.id);
  }
  for (int i = 0; i < spec.n_val; ++i, ++index) {
    Sample s = generate_sample(cfg, index);
    write_image(s);
    write_label(s, 0);
    manifest["val"].push_back(s.id);
  }
  for (int i = 0; i < spec.n_test; ++i, ++index) {
    Sample s = generate_sample(cfg, index);
    write_image(s);
    write_label(s, 0);
    manifest["test"].push_back(s.id);
  }
  if (!overrides.empty()) manifest["level_overrides"] = overrides;

  std::ofstream mf(fs::path(out_dir) / "manifest.json");
  if (!mf) throw std::runtime_error("generate_dataset: cannot write manifest");
  mf << manifest.dump(2) << "\n";
}

}  // namespace lumos
