#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>

#include "cgr/scene.hpp"

using namespace cgr;

namespace {

std::string temp_path(const char* name) {
  return std::string("/tmp/cgr_scene_test_") + name;
}

}  // namespace

TEST_CASE("rank table construction guarantees") {
  RankTable t1 = build_rank_table(42, 3, 2, 12);
  RankTable t2 = build_rank_table(42, 3, 2, 12);
  CHECK(t1 == t2);  // deterministic in seed

  RankTable t3 = build_rank_table(43, 3, 2, 12);
  CHECK(t1.ranks != t3.ranks);

  for (int a = 0; a < t1.n_affordances; ++a) {
    // some category must differ across the two contexts
    bool differs = false;
    int relevant = 0;
    for (int k = 0; k < t1.n_categories; ++k) {
      if (t1.rank(a, 0, k) <= kMaxRankLevel) ++relevant;
      if (t1.rank(a, 0, k) != t1.rank(a, 1, k)) differs = true;
    }
    CHECK(differs);
    CHECK(relevant >= 2);
    // every context uses >=2 distinct levels among relevant categories
    for (int c = 0; c < t1.contexts_per_affordance; ++c) {
      std::set<int> levels;
      for (int k = 0; k < t1.n_categories; ++k) {
        const int r = t1.rank(a, c, k);
        if (r <= kMaxRankLevel) levels.insert(r);
      }
      CHECK(levels.size() >= 2);
    }
  }

  CHECK_THROWS_AS(build_rank_table(1, 3, 1, 12), std::invalid_argument);
  CHECK_THROWS_AS(build_rank_table(1, 3, 2, 1), std::invalid_argument);
}

TEST_CASE("rank_lookup") {
  RankTable t = build_rank_table(7, 2, 2, 10);
  TaskSpec task = make_task_spec(t, 1, 0);
  // readback matches the table for every category
  for (int k = 0; k < 10; ++k) CHECK(rank_lookup(t, task, k) == t.rank(1, 0, k));
  // unlisted category maps to the irrelevant level
  RankTable small;
  small.n_affordances = 1;
  small.contexts_per_affordance = 2;
  small.n_categories = 4;
  small.set(0, 0, 0, 1);
  TaskSpec st;
  st.affordance_id = 0;
  st.context_id = 0;
  CHECK(rank_lookup(small, st, 3) == kIrrelevantRank);

  TaskSpec bad;
  bad.affordance_id = 9;
  CHECK_THROWS_AS(rank_lookup(t, bad, 0), std::invalid_argument);
}

TEST_CASE("scene generation is deterministic and annotation-complete") {
  RankTable t = build_rank_table(5, 3, 2, 12);
  SceneGenConfig cfg;

  const auto path_a = temp_path("det_a.jsonl");
  const auto path_b = temp_path("det_b.jsonl");
  save_dataset(generate_dataset(0, 25, t, cfg), path_a);
  save_dataset(generate_dataset(0, 25, t, cfg), path_b);
  std::ifstream fa(path_a), fb(path_b);
  std::string ca((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  std::string cb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  CHECK(ca == cb);  // byte-identical serialization
  CHECK(!ca.empty());
  std::remove(path_a.c_str());
  std::remove(path_b.c_str());

  auto scenes = generate_dataset(11, 60, t, cfg);
  validate_dataset(scenes);  // covers the two-rank-level contract
  for (const auto& s : scenes) {
    CHECK(s.objects.size() >= 2);
    for (const auto& [task, ann] : s.tasks) {
      (void)task;
      std::set<int> levels;
      for (std::size_t i = 0; i < ann.ranks.size(); ++i)
        if (ann.relevant[i]) levels.insert(ann.ranks[i]);
      CHECK(levels.size() >= 2);
    }
  }
}

TEST_CASE("impossible packing reports max_tries") {
  RankTable t = build_rank_table(5, 2, 2, 12);
  SceneGenConfig cfg;
  cfg.min_objects = 3;
  cfg.max_objects = 3;
  cfg.min_sep = 1.0;
  cfg.max_tries = 50;
  CHECK_THROWS_AS(generate_scene(1, t, cfg), std::runtime_error);
}

TEST_CASE("dataset save/load round trip") {
  RankTable t = build_rank_table(3, 4, 2, 14);
  SceneGenConfig cfg;
  auto scenes = generate_dataset(99, 100, t, cfg);
  const auto path = temp_path("roundtrip.jsonl");
  save_dataset(scenes, path);
  auto loaded = load_dataset(path, t);
  REQUIRE(loaded.size() == scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i) CHECK(loaded[i] == scenes[i]);
  std::remove(path.c_str());
}

TEST_CASE("loader reports malformed lines") {
  RankTable t = build_rank_table(3, 2, 2, 10);
  const auto path = temp_path("bad.jsonl");
  {
    std::ofstream out(path);
    out << R"({"scene_id":"s0","seed":1,"objects":[{"bbox":[0.5,0.5,0.2,0.2],"category":0}],)"
        << R"("tasks":[{"affordance":0,"context":0,"relevant":[true]}]})"
        << "\n";
  }
  try {
    load_dataset(path, t);
    FAIL("expected a parse error");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("line 1") != std::string::npos);
    CHECK(msg.find("ranks") != std::string::npos);
  }
  std::remove(path.c_str());

  // empty file -> empty dataset
  {
    std::ofstream out(path);
  }
  CHECK(load_dataset(path, t).empty());
  std::remove(path.c_str());
}

TEST_CASE("rank table file round trip") {
  RankTable t = build_rank_table(4, 3, 2, 12);
  const auto path = temp_path("table.json");
  save_rank_table(t, path);
  RankTable loaded = load_rank_table(path);
  CHECK(loaded == t);
  std::remove(path.c_str());
}

TEST_CASE("validator rejects a single-rank-level corpus") {
  RankTable t = build_rank_table(3, 2, 2, 10);
  auto scenes = generate_dataset(5, 3, t);
  auto& ann = scenes[0].tasks[0].second;
  for (std::size_t i = 0; i < ann.ranks.size(); ++i) {
    ann.ranks[i] = ann.relevant[i] ? 1 : kIrrelevantRank;
  }
  CHECK_THROWS_AS(validate_dataset(scenes), std::runtime_error);
}

TEST_CASE("every configured rank level appears over many scenes") {
  RankTable t = build_rank_table(21, 4, 2, 16, {7, 7});  // 7 relevant categories each
  int max_level_used = 0;
  for (const auto& [key, r] : t.ranks) {
    (void)key;
    if (r <= kMaxRankLevel) max_level_used = std::max(max_level_used, r);
  }
  SceneGenConfig cfg;
  cfg.min_objects = 4;
  cfg.max_objects = 8;
  auto scenes = generate_dataset(2024, 1000, t, cfg);
  std::set<int> seen;
  for (const auto& s : scenes)
    for (const auto& [task, ann] : s.tasks) {
      (void)task;
      for (std::size_t i = 0; i < ann.ranks.size(); ++i)
        if (ann.relevant[i]) seen.insert(ann.ranks[i]);
    }
  for (int level = 1; level <= max_level_used; ++level) CHECK(seen.count(level) == 1);
}
