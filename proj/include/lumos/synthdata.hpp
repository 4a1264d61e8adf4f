#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lumos/granularity.hpp"

namespace lumos {

// Layered grayscale generator. Images look like stacked undulating tissue
// bands over a dark background: band boundaries are sums of low-frequency
// sinusoids, intensities are per-band means plus texture, and the whole image
// gets multiplicative speckle. Ground-truth labels are exact band membership.
struct SyntheticConfig {
  int image_size = 128;  // H = W, must be divisible by 32 for training
  int base_classes = 9;
  double boundary_amplitude = 2.5;  // max |offset| of a boundary, px
  std::vector<double> layer_means;  // one per base class; empty = default set
  double layer_std = 0.04;          // intra-band texture
  double background_mean = 0.08;
  double mean_jitter = 0.05;  // per-sample uniform shift applied to all means
  double band_jitter = 0.12;  // per-band independent shift; survives per-image
                              // normalization, unlike mean_jitter
  double speckle = 0.45;      // multiplicative noise level
  uint64_t seed = 1234;
};

// Throws with the violated constraint named. In particular the worst-case
// band thickness must stay >= 2 px after boundary undulation.
void validate_config(const SyntheticConfig& cfg);

std::vector<double> default_layer_means(int base_classes);

struct Sample {
  std::vector<float> image;  // H*W, values in [0,1]
  LabelMap label;            // base level
  std::string id;
};

// Pure function of (cfg.seed, index).
Sample generate_sample(const SyntheticConfig& cfg, int64_t index);

struct DatasetSpec {
  int n_labeled = 20;
  int n_unlabeled = 80;
  int n_val = 10;
  int n_test = 20;
  std::string labeled_level = "base9";
  // optional per-labeled-sample level names (size n_labeled); empty = all at
  // labeled_level. Samples differing from labeled_level are recorded in the
  // manifest's level_overrides map.
  std::vector<std::string> labeled_levels;
};

// Writes images/, labels/, schema.json and manifest.json under out_dir.
// Labeled labels are merged to their level before writing; val/test labels
// are written at base level.
void generate_dataset(const SyntheticConfig& cfg, const Schema& schema,
                      const DatasetSpec& spec, const std::string& out_dir);

}  // namespace lumos
