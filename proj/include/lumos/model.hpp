#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "lumos/ad/ops.hpp"
#include "lumos/ad/tape.hpp"
#include "lumos/core/rng.hpp"
#include "lumos/core/tensor.hpp"
#include "lumos/granularity.hpp"

namespace lumos {

// Dual-decoder segmentation network: a shared 5-stage conv encoder with one
// self-attention block at the deepest stride, a prompt decoder that refines
// nine learnable class prompts by mask-biased cross-attention over the two
// deepest feature scales, and two pixel decoders. Branch A upsamples with
// learnable transposed convolutions, branch B with fixed bilinear
// interpolation; each stage concatenates the matching encoder skip and fuses
// with its own 3x3 conv. Per-class probabilities come from dotting projected
// prompts against the decoder's pixel features.
struct ModelConfig {
  int base_width = 8;   // stage-1 channels; doubles per stage
  int stages = 5;       // deepest stride 32
  int tf_blocks = 1;    // self-attention blocks on the deepest scale
  int heads = 4;
  int prompt_layers = 2;  // cross-attention layers; layer k reads stage 5-k
  int out_channels = 16;  // pixel feature width F_p
  int base_classes = 9;

  int prompt_dim() const { return base_width << (stages - 1); }
};

struct Param {
  std::string name;
  Tensor value;
};

struct BranchOut {
  ad::Var fp;     // [B, out_channels, H, W]
  ad::Var probs;  // [B, base_classes, H*W], strictly in (0,1)
};

struct ForwardOptions {
  bool branch_a = true;
  bool branch_b = true;
  bool requires_grad = true;
};

class Model {
 public:
  Model(ModelConfig cfg, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  int64_t param_count(const std::string& name_prefix) const;

  struct Forward {
    BranchOut a, b;
    std::vector<ad::Var> pvars;  // parallel to params(); Var{} when unused
  };

  // images [B, 1, H, W], H and W divisible by 2^stages
  Forward forward(ad::Tape& t, const Tensor& images, const ForwardOptions& opts);

  // Branch-A-only inference: per-pixel argmax over the implicit background
  // (1 - union of all groups) and the level's composed group probabilities.
  LabelMap predict(const Tensor& image_11hw, const Schema& schema, int level);

 private:
  ModelConfig cfg_;
  std::vector<Param> params_;
  std::unordered_map<std::string, int> index_;

  int add_param(const std::string& name, Tensor value);
  int index_of(const std::string& name) const;
};

// Value-side noisy-OR composition of base-class probabilities to a level.
// base_probs [B, base, S] or [base, S]; identity copy at level 0.
Tensor compose_level_probs(const Tensor& base_probs, const Schema& schema, int level);

}  // namespace lumos
