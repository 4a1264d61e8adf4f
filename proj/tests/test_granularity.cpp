#include <filesystem>
#include <set>
#include <stdexcept>

#include "doctest.h"
#include "lumos/core/rng.hpp"
#include "lumos/granularity.hpp"

using namespace lumos;

namespace {

std::string tmp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_SUITE("granularity") {

TEST_CASE("default schema is base9 / mid5 / coarse3 with a valid hierarchy") {
  const Schema s = default_schema();
  CHECK(s.base_classes == 9);
  REQUIRE(s.level_count() == 3);
  CHECK(s.level_name(0) == "base9");
  CHECK(s.level_name(1) == "mid5");
  CHECK(s.level_name(2) == "coarse3");
  CHECK(s.group_count(0) == 9);
  CHECK(s.group_count(1) == 5);
  CHECK(s.group_count(2) == 3);

  // level 0 must be singletons in class order
  for (int g = 0; g < 9; ++g) {
    REQUIRE(s.class_composition(0, g).size() == 1);
    CHECK(s.class_composition(0, g)[0] == g);
  }

  // every level partitions the base classes exactly once
  for (int lv = 0; lv < s.level_count(); ++lv) {
    std::set<int> seen;
    for (int g = 0; g < s.group_count(lv); ++g)
      for (int c : s.class_composition(lv, g)) {
        CHECK(!seen.count(c));
        seen.insert(c);
      }
    CHECK(seen.size() == 9);
  }

  // each coarser level merges whole groups of the finer one
  for (int fine = 0; fine + 1 < s.level_count(); ++fine)
    for (int g = 0; g < s.group_count(fine); ++g) {
      const auto& members = s.class_composition(fine, g);
      const int target = s.group_of_base(fine + 1, members[0]);
      for (int c : members) CHECK(s.group_of_base(fine + 1, c) == target);
    }
}

TEST_CASE("level_index finds names and rejects unknown ones") {
  const Schema s = default_schema();
  CHECK(s.level_index("base9") == 0);
  CHECK(s.level_index("coarse3") == 2);
  CHECK_THROWS_AS((void)s.level_index("nope"), std::exception);
}

TEST_CASE("group_of_base agrees with class_composition everywhere") {
  const Schema s = default_schema();
  for (int lv = 0; lv < s.level_count(); ++lv)
    for (int g = 0; g < s.group_count(lv); ++g)
      for (int c : s.class_composition(lv, g)) CHECK(s.group_of_base(lv, c) == g);
}

TEST_CASE("schema JSON round-trips bit-exactly") {
  const Schema s = default_schema();
  const std::string text = schema_to_json(s);
  const Schema back = parse_schema_json(text);
  CHECK(schema_to_json(back) == text);
  CHECK(back.base_classes == s.base_classes);
  REQUIRE(back.level_count() == s.level_count());
  for (int lv = 0; lv < s.level_count(); ++lv) {
    CHECK(back.level_name(lv) == s.level_name(lv));
    REQUIRE(back.group_count(lv) == s.group_count(lv));
    for (int g = 0; g < s.group_count(lv); ++g)
      CHECK(back.class_composition(lv, g) == s.class_composition(lv, g));
  }

  const std::string path = tmp_path("schema_roundtrip.json");
  save_schema(s, path);
  const Schema loaded = load_schema(path);
  CHECK(schema_to_json(loaded) == text);
  std::filesystem::remove(path);
}

TEST_CASE("structural validation rejects malformed schemas") {
  // level 0 not singletons
  CHECK_THROWS_AS(parse_schema_json(R"({"base_classes":2,
    "levels":[{"name":"b","groups":[[0,1]]}]})"),
                  std::exception);
  // missing class in a partition
  CHECK_THROWS_AS(parse_schema_json(R"({"base_classes":3,
    "levels":[{"name":"b","groups":[[0],[1],[2]]},
              {"name":"c","groups":[[0,1]]}]})"),
                  std::exception);
  // duplicated class in a partition
  CHECK_THROWS_AS(parse_schema_json(R"({"base_classes":2,
    "levels":[{"name":"b","groups":[[0],[1]]},
              {"name":"c","groups":[[0,1],[1]]}]})"),
                  std::exception);
  // class index out of range
  CHECK_THROWS_AS(parse_schema_json(R"({"base_classes":2,
    "levels":[{"name":"b","groups":[[0],[7]]}]})"),
                  std::exception);
  // coarser level splits a finer group instead of merging
  CHECK_THROWS_AS(parse_schema_json(R"({"base_classes":2,
    "levels":[{"name":"b","groups":[[0],[1]]},
              {"name":"m","groups":[[0,1]]},
              {"name":"c","groups":[[0],[1]]}]})"),
                  std::exception);
  // duplicate level names
  CHECK_THROWS_AS(parse_schema_json(R"({"base_classes":2,
    "levels":[{"name":"b","groups":[[0],[1]]},
              {"name":"b","groups":[[0,1]]}]})"),
                  std::exception);
  // not JSON at all
  CHECK_THROWS_AS(parse_schema_json("{nope"), std::exception);
}

TEST_CASE("merge_labels maps each class to its containing group") {
  const Schema s = default_schema();
  LabelMap m;
  m.h = 1;
  m.w = 10;
  m.level = 0;
  m.data = {0, 1, 2, 3, 4, 5, 6, 7, 8, kBackground};
  const LabelMap mid = merge_labels(m, 1, s);
  CHECK(mid.level == 1);
  REQUIRE(mid.data.size() == 10);
  for (int x = 0; x < 9; ++x) CHECK(mid.at(0, x) == s.group_of_base(1, x));
  CHECK(mid.at(0, 9) == kBackground);

  // merging to the same level is the identity
  const LabelMap same = merge_labels(m, 0, s);
  CHECK(same.data == m.data);
}

TEST_CASE("merging fine to mid to coarse equals merging straight to coarse") {
  const Schema s = default_schema();
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    LabelMap m;
    m.h = 7;
    m.w = 11;
    m.level = 0;
    m.data.resize(77);
    for (auto& v : m.data) {
      const int64_t k = rng.uniform_int(10);
      v = k == 9 ? kBackground : (uint8_t)k;
    }
    const LabelMap direct = merge_labels(m, 2, s);
    const LabelMap stepped = merge_labels(merge_labels(m, 1, s), 2, s);
    CHECK(direct.data == stepped.data);
    CHECK(direct.level == 2);
  }
}

TEST_CASE("merge_labels rejects refinement and bad group values") {
  const Schema s = default_schema();
  LabelMap coarse;
  coarse.h = 1;
  coarse.w = 2;
  coarse.level = 2;
  coarse.data = {0, 1};
  CHECK_THROWS_AS((void)merge_labels(coarse, 0, s), std::exception);

  LabelMap bad;
  bad.h = 1;
  bad.w = 1;
  bad.level = 1;
  bad.data = {9};  // mid5 has groups 0..4 only
  CHECK_THROWS_AS((void)merge_labels(bad, 2, s), std::exception);
}

}  // TEST_SUITE
