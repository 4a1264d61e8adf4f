#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lumos {

// Label value for "not any foreground class". Never a schema group.
constexpr uint8_t kBackground = 255;

struct Level {
  std::string name;
  std::vector<std::vector<int>> groups;  // base-class indices per group
};

// Class hierarchy over the base (finest) classes. Levels are stored fine to
// coarse: levels[0] is always the base level (one singleton group per class),
// and each level's partition refines the previous coarser one.
struct Schema {
  int base_classes = 0;
  std::vector<Level> levels;

  int level_count() const { return (int)levels.size(); }
  int group_count(int level) const { return (int)levels[(size_t)level].groups.size(); }
  const std::string& level_name(int level) const { return levels[(size_t)level].name; }

  // index of the named level; throws if absent
  int level_index(const std::string& name) const;

  // base-class set of one group; singleton at level 0
  const std::vector<int>& class_composition(int level, int group) const;

  // group at `level` containing base class `base`
  int group_of_base(int level, int base) const;

  // true if `coarse` is the same level as `fine` or an ancestor (coarser)
  bool is_coarser_or_equal(int coarse, int fine) const { return coarse >= fine; }
};

// Default 9-class hierarchy used by the synthetic benchmark:
// base9 (singletons), mid5, coarse3.
Schema default_schema();

// Schema JSON: {"base_classes": N, "levels": [{"name", "groups": [[...]]}]}.
// load validates every structural invariant; save round-trips bit-exactly.
Schema load_schema(const std::string& path);
void save_schema(const Schema& schema, const std::string& path);
Schema parse_schema_json(const std::string& text);
std::string schema_to_json(const Schema& schema);

// Label maps are flat row-major uint8 arrays with kBackground sentinel.
struct LabelMap {
  std::vector<uint8_t> data;
  int h = 0, w = 0;
  int level = 0;

  uint8_t& at(int y, int x) { return data[(size_t)y * w + x]; }
  uint8_t at(int y, int x) const { return data[(size_t)y * w + x]; }
};

// Re-labels each pixel's group at `labels.level` to the containing group at
// `target_level` (which must be coarser or equal). Background is preserved.
LabelMap merge_labels(const LabelMap& labels, int target_level, const Schema& schema);

}  // namespace lumos
