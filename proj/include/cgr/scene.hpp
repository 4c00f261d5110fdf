#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace cgr {

// Rank levels: 1 (highest priority) .. 7, plus 8 for task-irrelevant objects.
constexpr int kMaxRankLevel = 7;
constexpr int kIrrelevantRank = 8;

// One task instance: an affordance verb qualified by a context. Token ids
// index the shared embedding table; by convention each word slot is one
// token (verb -> one id, context qualifier -> one id after the verb block).
struct TaskSpec {
  int affordance_id = 0;
  int context_id = 0;
  std::vector<int> affordance_tokens;
  std::vector<int> context_tokens;

  bool operator==(const TaskSpec&) const = default;
};

struct SceneObject {
  std::array<double, 4> bbox{};  // cx, cy, w, h normalized to the unit square
  int category_id = 0;

  bool operator==(const SceneObject&) const = default;
};

struct RankAnnotation {
  std::vector<int> ranks;      // per object, 1..7 or kIrrelevantRank
  std::vector<bool> relevant;  // rank <= kMaxRankLevel

  bool operator==(const RankAnnotation&) const = default;
};

// (affordance, context, category) -> rank level. Categories an affordance
// cannot use map to kIrrelevantRank under every context; the table stores
// the full domain so files round-trip exactly.
struct RankTable {
  int n_affordances = 0;
  int contexts_per_affordance = 0;
  int n_categories = 0;
  std::map<std::array<int, 3>, int> ranks;

  int rank(int affordance, int context, int category) const;
  void set(int affordance, int context, int category, int rank_level);

  bool operator==(const RankTable&) const = default;
};

struct SceneSample {
  std::string scene_id;
  std::uint64_t seed = 0;
  std::vector<SceneObject> objects;
  std::vector<std::pair<TaskSpec, RankAnnotation>> tasks;

  bool operator==(const SceneSample&) const = default;
};

struct SceneGenConfig {
  int min_objects = 3;
  int max_objects = 8;
  double min_sep = 0.16;   // minimum pairwise center distance
  double min_size = 0.10;  // box width/height range
  double max_size = 0.26;
  int tasks_per_scene = 2;
  int max_tries = 2000;
};

struct RankTableConfig {
  int min_relevant = 3;  // relevant categories per affordance
  int max_relevant = 7;
};

// Deterministic in seed. Guarantees per affordance: >=2 relevant categories,
// every context uses >=2 distinct rank levels, and at least two contexts
// disagree on some category's rank.
RankTable build_rank_table(std::uint64_t seed, int n_affordances,
                           int contexts_per_affordance, int n_categories,
                           const RankTableConfig& cfg = {});

// Table value; kIrrelevantRank for categories outside the task's relevant set.
int rank_lookup(const RankTable& table, const TaskSpec& task, int category);

// Token-id convention shared by the generator and the text encoder.
TaskSpec make_task_spec(const RankTable& table, int affordance, int context);
int vocab_size(const RankTable& table);

// Places objects by rejection sampling and attaches tasks whose relevant
// objects span >=2 distinct rank levels. Deterministic in (seed, table, cfg).
SceneSample generate_scene(std::uint64_t seed, const RankTable& table,
                           const SceneGenConfig& cfg = {},
                           const std::string& scene_id = "");

std::vector<SceneSample> generate_dataset(std::uint64_t seed, int count,
                                          const RankTable& table,
                                          const SceneGenConfig& cfg = {});

// UTF-8, one JSON object per line; load(save(x)) == x field-for-field.
void save_dataset(const std::vector<SceneSample>& samples, const std::string& path);
std::vector<SceneSample> load_dataset(const std::string& path, const RankTable& table);

void save_rank_table(const RankTable& table, const std::string& path);
RankTable load_rank_table(const std::string& path);

// Schema checks on a loaded corpus; throws std::runtime_error naming the
// first violated invariant.
void validate_dataset(const std::vector<SceneSample>& samples);

}  // namespace cgr
