#include "lumos/granularity.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace lumos {

namespace {

using nlohmann::json;

[[noreturn]] void schema_error(const std::string& what) {
  throw std::runtime_error("schema: " + what);
}

void validate(const Schema& s) {
  if (s.base_classes <= 0) schema_error("base_classes must be positive");
  if (s.levels.empty()) schema_error("no levels");

  // names select levels, so they must be unambiguous
  for (size_t i = 0; i < s.levels.size(); ++i)
    for (size_t j = i + 1; j < s.levels.size(); ++j)
      if (s.levels[i].name == s.levels[j].name)
        schema_error("duplicate level name '" + s.levels[i].name + "'");

  // level 0 must be the identity partition
  const Level& base = s.levels[0];
  if ((int)base.groups.size() != s.base_classes)
    schema_error("level 0 '" + base.name + "' is not the base partition");
  for (int g = 0; g < s.base_classes; ++g)
    if (base.groups[(size_t)g].size() != 1 || base.groups[(size_t)g][0] != g)
      schema_error("level 0 group " + std::to_string(g) + " is not the singleton {" +
                   std::to_string(g) + "}");

  for (size_t li = 0; li < s.levels.size(); ++li) {
    const Level& lv = s.levels[li];
    if (lv.groups.empty()) schema_error("level '" + lv.name + "' has no groups");
    std::vector<int> owner((size_t)s.base_classes, -1);
    for (size_t gi = 0; gi < lv.groups.size(); ++gi) {
      const auto& g = lv.groups[gi];
      if (g.empty())
        schema_error("level '" + lv.name + "' group " + std::to_string(gi) + " is empty");
      for (size_t k = 0; k < g.size(); ++k) {
        const int c = g[k];
        if (c < 0 || c >= s.base_classes)
          schema_error("level '" + lv.name + "' group " + std::to_string(gi) +
                       " has out-of-range class " + std::to_string(c));
        if (owner[(size_t)c] != -1)
          schema_error("level '" + lv.name + "': overlapping groups (class " +
                       std::to_string(c) + ")");
        owner[(size_t)c] = (int)gi;
        // stacked layers: a coarse band is a contiguous run of base indices
        if (k > 0 && g[k] != g[k - 1] + 1)
          schema_error("level '" + lv.name + "' group " + std::to_string(gi) +
                       " is not a contiguous run");
      }
    }
    for (int c = 0; c < s.base_classes; ++c)
      if (owner[(size_t)c] == -1)
        schema_error("level '" + lv.name + "' does not cover class " + std::to_string(c));

    // each level must refine the next-coarser one: every group of the finer
    // level must live inside a single group of the coarser
    if (li + 1 < s.levels.size()) {
      const Level& coarser = s.levels[li + 1];
      std::vector<int> coarse_owner((size_t)s.base_classes, -1);
      for (size_t gi = 0; gi < coarser.groups.size(); ++gi)
        for (int c : coarser.groups[gi]) coarse_owner[(size_t)c] = (int)gi;
      for (size_t gi = 0; gi < lv.groups.size(); ++gi) {
        const auto& g = lv.groups[gi];
        for (size_t k = 1; k < g.size(); ++k)
          if (coarse_owner[(size_t)g[k]] != coarse_owner[(size_t)g[0]])
            schema_error("level '" + lv.name + "' group " + std::to_string(gi) +
                         " straddles two groups of coarser level '" + coarser.name + "'");
      }
    }
  }
}

}  // namespace

int Schema::level_index(const std::string& name) const {
  for (size_t i = 0; i < levels.size(); ++i)
    if (levels[i].name == name) return (int)i;
  schema_error("unknown level '" + name + "'");
}

const std::vector<int>& Schema::class_composition(int level, int group) const {
  if (level < 0 || level >= level_count()) schema_error("level out of range");
  const auto& gs = levels[(size_t)level].groups;
  if (group < 0 || group >= (int)gs.size()) schema_error("group out of range");
  return gs[(size_t)group];
}

int Schema::group_of_base(int level, int base) const {
  const auto& gs = levels[(size_t)level].groups;
  for (size_t gi = 0; gi < gs.size(); ++gi)
    for (int c : gs[gi])
      if (c == base) return (int)gi;
  schema_error("base class not covered");
}

Schema default_schema() {
  Schema s;
  s.base_classes = 9;
  Level base{"base9", {}};
  for (int i = 0; i < 9; ++i) base.groups.push_back({i});
  Level mid{"mid5", {{0, 1}, {2}, {3, 4}, {5}, {6, 7, 8}}};
  Level coarse{"coarse3", {{0, 1, 2}, {3, 4, 5}, {6, 7, 8}}};
  s.levels = {base, mid, coarse};
  validate(s);
  return s;
}

Schema parse_schema_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    schema_error(std::string("parse failure: ") + e.what());
  }
  Schema s;
  if (!j.contains("base_classes") || !j.contains("levels"))
    schema_error("missing base_classes or levels");
  s.base_classes = j.at("base_classes").get<int>();
  for (const auto& jl : j.at("levels")) {
    Level lv;
    lv.name = jl.at("name").get<std::string>();
    for (const auto& jg : jl.at("groups"))
      lv.groups.push_back(jg.get<std::vector<int>>());
    s.levels.push_back(std::move(lv));
  }
  validate(s);
  return s;
}

std::string schema_to_json(const Schema& s) {
  json j;
  j["base_classes"] = s.base_classes;
  j["levels"] = json::array();
  for (const Level& lv : s.levels) {
    json jl;
    jl["name"] = lv.name;
    jl["groups"] = lv.groups;
    j["levels"].push_back(jl);
  }
  return j.dump(2) + "\n";
}

Schema load_schema(const std::string& path) {
  std::ifstream f(path);
  if (!f) schema_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_schema_json(ss.str());
}

void save_schema(const Schema& schema, const std::string& path) {
  std::ofstream f(path);
  if (!f) schema_error("cannot write '" + path + "'");
  f << schema_to_json(schema);
}

LabelMap merge_labels(const LabelMap& labels, int target_level, const Schema& schema) {
  if (!schema.is_coarser_or_equal(target_level, labels.level))
    schema_error("merge target '" + schema.level_name(target_level) +
                 "' is finer than source level");
  // per-group lookup: source group -> containing target group, via any base member
  const auto& src_groups = schema.levels[(size_t)labels.level].groups;
  std::vector<uint8_t> remap(src_groups.size());
  for (size_t gi = 0; gi < src_groups.size(); ++gi)
    remap[gi] = (uint8_t)schema.group_of_base(target_level, src_groups[gi][0]);

  LabelMap out;
  out.h = labels.h;
  out.w = labels.w;
  out.level = target_level;
  out.data.resize(labels.data.size());
  for (size_t i = 0; i < labels.data.size(); ++i) {
    const uint8_t v = labels.data[i];
    if (v == kBackground) {
      out.data[i] = kBackground;
    } else {
      if (v >= src_groups.size())
        schema_error("label value " + std::to_string(v) + " invalid at level '" +
                     schema.level_name(labels.level) + "'");
      out.data[i] = remap[v];
    }
  }
  return out;
}

}  // namespace lumos
