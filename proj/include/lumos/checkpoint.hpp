#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "lumos/model.hpp"

namespace lumos {

// Self-describing training snapshot: named float arrays (parameters and
// optimizer moments) plus the scalar state needed to resume bit-identically.
struct Checkpoint {
  nlohmann::json config;  // experiment config echo, compared on resume
  int64_t iteration = 0;
  std::string rng_state;
  double best_val_dsc = 0.0;
  std::vector<Param> arrays;
};

// Binary container: magic, little-endian header length, JSON header, raw
// float32 blobs in header order. Written to a temp file and renamed so a
// crash never leaves a partial checkpoint behind.
void save_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Throws when the stored config echo differs from `expected`.
void require_config_match(const Checkpoint& c, const nlohmann::json& expected);

}  // namespace lumos
