#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lumos/core/rng.hpp"
#include "lumos/granularity.hpp"

namespace lumos {

// One dataset entry after preprocessing: image standardized to zero mean /
// unit variance at model resolution; label (when present) resized
// nearest-neighbor to the same grid.
struct DatasetSample {
  std::string id;
  std::vector<float> image;  // size*size
  LabelMap label;            // empty data if unlabeled
  bool has_label = false;
  int level = 0;  // annotation level for labeled samples
};

struct Dataset {
  Schema schema;
  int size = 0;  // model-side H = W after preprocessing
  std::vector<DatasetSample> labeled;
  std::vector<DatasetSample> unlabeled;
  std::vector<DatasetSample> val;
  std::vector<DatasetSample> test;
};

// Reads a generated dataset directory (manifest.json + schema.json + pngs),
// validating that every referenced file exists and every label value fits the
// sample's declared level. target_size = 0 keeps the stored resolution.
Dataset load_dataset(const std::string& dir, int target_size = 0);

// Bilinear resize of a [0,1] grayscale image followed by per-image
// standardization (variance floor 1e-6).
std::vector<float> preprocess_image(const std::vector<uint8_t>& pixels, int h,
                                    int w, int target_size);
// Nearest-neighbor resize for label maps.
LabelMap resize_label_nn(const LabelMap& label, int target_size);

// Augmentation draws, separated from application so tests can force paths.
struct AugmentDraws {
  bool flip = false;
  double noise_sigma = 0.0;   // per-pixel Gaussian, drawn from [0, 0.05]
  double brightness = 0.0;    // additive, [-0.2, 0.2]
  double contrast = 1.0;      // multiplicative, [0.8, 1.2]
};

AugmentDraws draw_augment(Rng& rng);

// Applies draws to a standardized image (and flips the label with it). The
// rng supplies the per-pixel noise; label values are never changed, only
// mirrored by the flip.
void apply_augment(std::vector<float>& image, LabelMap* label, int h, int w,
                   const AugmentDraws& draws, Rng& rng);

// Indices into dataset.labeled / dataset.unlabeled for one training batch.
// Exactly round(batch_size * labeled_fraction) labeled samples, both pools
// sampled with replacement. An empty unlabeled pool degrades to labeled-only.
struct BatchIds {
  std::vector<int> labeled;
  std::vector<int> unlabeled;
};

BatchIds draw_batch(const Dataset& ds, int batch_size, double labeled_fraction,
                    Rng& rng);

}  // namespace lumos
