#include "cgr/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "cgr/rng.hpp"

namespace cgr {

namespace {

using nlohmann::json;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::vector<int> relevant_categories(const RankTable& t, int a, int c) {
  std::vector<int> out;
  for (int k = 0; k < t.n_categories; ++k)
    if (t.rank(a, c, k) <= kMaxRankLevel) out.push_back(k);
  return out;
}

}  // namespace

int RankTable::rank(int affordance, int context, int category) const {
  auto it = ranks.find({affordance, context, category});
  return it == ranks.end() ? kIrrelevantRank : it->second;
}

void RankTable::set(int affordance, int context, int category, int rank_level) {
  ranks[{affordance, context, category}] = rank_level;
}

RankTable build_rank_table(std::uint64_t seed, int n_affordances,
                           int contexts_per_affordance, int n_categories,
                           const RankTableConfig& cfg) {
  if (n_affordances < 1) throw std::invalid_argument("build_rank_table: need at least one affordance");
  if (contexts_per_affordance < 2)
    throw std::invalid_argument("build_rank_table: each affordance needs at least two contexts");
  const int min_rel = std::max(2, cfg.min_relevant);
  if (n_categories < min_rel)
    throw std::invalid_argument("build_rank_table: " + std::to_string(n_categories) +
                                " categories cannot supply " + std::to_string(min_rel) +
                                " relevant categories per affordance");

  Rng rng(splitmix64(seed));
  RankTable table;
  table.n_affordances = n_affordances;
  table.contexts_per_affordance = contexts_per_affordance;
  table.n_categories = n_categories;

  for (int a = 0; a < n_affordances; ++a) {
    const int max_rel = std::min(cfg.max_relevant, n_categories);
    const int n_rel = static_cast<int>(rng.uniform_int(min_rel, std::max(min_rel, max_rel)));
    std::vector<int> cats(n_categories);
    for (int k = 0; k < n_categories; ++k) cats[k] = k;
    rng.shuffle(cats);
    cats.resize(n_rel);
    std::sort(cats.begin(), cats.end());

    for (int c = 0; c < contexts_per_affordance; ++c) {
      // random surjection onto 1..L so every level in range occurs
      const int levels = static_cast<int>(rng.uniform_int(2, std::min(kMaxRankLevel, n_rel)));
      std::vector<int> order = cats;
      rng.shuffle(order);
      for (int i = 0; i < n_rel; ++i) {
        const int r = i < levels ? i + 1 : static_cast<int>(rng.uniform_int(1, levels));
        table.set(a, c, order[i], r);
      }
    }
    for (int k = 0; k < n_categories; ++k) {
      if (std::find(cats.begin(), cats.end(), k) != cats.end()) continue;
      for (int c = 0; c < contexts_per_affordance; ++c) table.set(a, c, k, kIrrelevantRank);
    }

    // force a cross-context disagreement when the shuffles happened to agree
    bool differs = false;
    for (int c = 1; c < contexts_per_affordance && !differs; ++c)
      for (int k : cats)
        if (table.rank(a, c, k) != table.rank(a, 0, k)) {
          differs = true;
          break;
        }
    if (!differs) {
      int lo = cats[0], hi = cats[0];
      for (int k : cats) {
        if (table.rank(a, 1, k) < table.rank(a, 1, lo)) lo = k;
        if (table.rank(a, 1, k) > table.rank(a, 1, hi)) hi = k;
      }
      const int rl = table.rank(a, 1, lo), rh = table.rank(a, 1, hi);
      table.set(a, 1, lo, rh);
      table.set(a, 1, hi, rl);
    }
  }
  return table;
}

int rank_lookup(const RankTable& table, const TaskSpec& task, int category) {
  if (task.affordance_id < 0 || task.affordance_id >= table.n_affordances)
    throw std::invalid_argument("rank_lookup: unknown affordance id " +
                                std::to_string(task.affordance_id));
  if (task.context_id < 0 || task.context_id >= table.contexts_per_affordance)
    throw std::invalid_argument("rank_lookup: unknown context id " +
                                std::to_string(task.context_id));
  return table.rank(task.affordance_id, task.context_id, category);
}

TaskSpec make_task_spec(const RankTable& table, int affordance, int context) {
  if (affordance < 0 || affordance >= table.n_affordances)
    throw std::invalid_argument("make_task_spec: affordance id out of range");
  if (context < 0 || context >= table.contexts_per_affordance)
    throw std::invalid_argument("make_task_spec: context id out of range");
  TaskSpec t;
  t.affordance_id = affordance;
  t.context_id = context;
  t.affordance_tokens = {affordance};
  t.context_tokens = {table.n_affordances +
                      affordance * table.contexts_per_affordance + context};
  return t;
}

int vocab_size(const RankTable& table) {
  return table.n_affordances +
         table.n_affordances * table.contexts_per_affordance;
}

SceneSample generate_scene(std::uint64_t seed, const RankTable& table,
                           const SceneGenConfig& cfg, const std::string& scene_id) {
  if (cfg.min_objects < 2 || cfg.max_objects < cfg.min_objects)
    throw std::invalid_argument("generate_scene: object count bounds must allow >=2 objects");
  if (cfg.tasks_per_scene < 1 || cfg.tasks_per_scene > table.contexts_per_affordance)
    throw std::invalid_argument("generate_scene: tasks_per_scene outside [1, contexts]");

  Rng rng(splitmix64(seed ^ 0xA5C3ull));
  SceneSample scene;
  scene.seed = seed;
  scene.scene_id = scene_id.empty() ? "scene-" + std::to_string(seed) : scene_id;

  const int n_obj = static_cast<int>(rng.uniform_int(cfg.min_objects, cfg.max_objects));
  const int a = static_cast<int>(rng.uniform_int(0, table.n_affordances - 1));
  std::vector<int> contexts(table.contexts_per_affordance);
  for (int c = 0; c < table.contexts_per_affordance; ++c) contexts[c] = c;
  rng.shuffle(contexts);
  contexts.resize(cfg.tasks_per_scene);
  std::sort(contexts.begin(), contexts.end());

  // categories: seed two distinct-rank categories for the first context,
  // fill the rest uniformly, and retry until every attached task sees at
  // least two rank levels among its relevant objects
  std::vector<int> cats;
  bool ok = false;
  for (int attempt = 0; attempt < cfg.max_tries && !ok; ++attempt) {
    cats.clear();
    const auto rel = relevant_categories(table, a, contexts[0]);
    std::vector<int> pick = rel;
    rng.shuffle(pick);
    int first = pick[0], second = -1;
    for (std::size_t i = 1; i < pick.size(); ++i) {
      if (table.rank(a, contexts[0], pick[i]) != table.rank(a, contexts[0], first)) {
        second = pick[i];
        break;
      }
    }
    if (second < 0) continue;  // degenerate shuffle; retry
    cats.push_back(first);
    cats.push_back(second);
    for (int i = 2; i < n_obj; ++i)
      cats.push_back(static_cast<int>(rng.uniform_int(0, table.n_categories - 1)));
    rng.shuffle(cats);

    ok = true;
    for (int c : contexts) {
      std::set<int> levels;
      for (int k : cats) {
        const int r = table.rank(a, c, k);
        if (r <= kMaxRankLevel) levels.insert(r);
      }
      if (levels.size() < 2) {
        ok = false;
        break;
      }
    }
  }
  if (!ok)
    throw std::runtime_error("generate_scene: could not satisfy the two-rank-level "
                             "constraint within max_tries");

  // box placement with pairwise center separation
  int placement_tries = 0;
  for (int i = 0; i < n_obj; ++i) {
    while (true) {
      if (++placement_tries > cfg.max_tries)
        throw std::runtime_error("generate_scene: min_sep=" + std::to_string(cfg.min_sep) +
                                 " unreachable within max_tries");
      SceneObject obj;
      obj.category_id = cats[i];
      const double w = rng.uniform(cfg.min_size, cfg.max_size);
      const double h = rng.uniform(cfg.min_size, cfg.max_size);
      obj.bbox = {rng.uniform(w / 2, 1.0 - w / 2), rng.uniform(h / 2, 1.0 - h / 2), w, h};
      bool separated = true;
      for (int j = 0; j < i; ++j) {
        const double dx = obj.bbox[0] - scene.objects[j].bbox[0];
        const double dy = obj.bbox[1] - scene.objects[j].bbox[1];
        if (std::sqrt(dx * dx + dy * dy) < cfg.min_sep) {
          separated = false;
          break;
        }
      }
      if (separated) {
        scene.objects.push_back(obj);
        break;
      }
    }
  }

  for (int c : contexts) {
    TaskSpec task = make_task_spec(table, a, c);
    RankAnnotation ann;
    for (const auto& obj : scene.objects) {
      const int r = table.rank(a, c, obj.category_id);
      ann.ranks.push_back(r);
      ann.relevant.push_back(r <= kMaxRankLevel);
    }
    scene.tasks.emplace_back(std::move(task), std::move(ann));
  }
  return scene;
}

std::vector<SceneSample> generate_dataset(std::uint64_t seed, int count,
                                          const RankTable& table,
                                          const SceneGenConfig& cfg) {
  std::vector<SceneSample> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    std::ostringstream id;
    id << "scene-" << i;
    out.push_back(generate_scene(splitmix64(seed + 1) ^ static_cast<std::uint64_t>(i),
                                 table, cfg, id.str()));
  }
  return out;
}

void save_dataset(const std::vector<SceneSample>& samples, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_dataset: cannot write " + path);
  for (const auto& s : samples) {
    json objects = json::array();
    for (const auto& o : s.objects)
      objects.push_back({{"bbox", o.bbox}, {"category", o.category_id}});
    json tasks = json::array();
    for (const auto& [task, ann] : s.tasks)
      tasks.push_back({{"affordance", task.affordance_id},
                       {"context", task.context_id},
                       {"ranks", ann.ranks},
                       {"relevant", ann.relevant}});
    json line = {{"scene_id", s.scene_id},
                 {"seed", s.seed},
                 {"objects", objects},
                 {"tasks", tasks}};
    out << line.dump() << "\n";
  }
}

std::vector<SceneSample> load_dataset(const std::string& path, const RankTable& table) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_dataset: cannot read " + path);
  std::vector<SceneSample> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = "load_dataset: line " + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::runtime_error(where + ": " + e.what());
    }
    auto need = [&](const json& obj, const char* field) -> const json& {
      if (!obj.contains(field))
        throw std::runtime_error(where + ": missing field \"" + field + "\"");
      return obj.at(field);
    };
    try {
      SceneSample s;
      s.scene_id = need(j, "scene_id").get<std::string>();
      s.seed = need(j, "seed").get<std::uint64_t>();
      for (const auto& jo : need(j, "objects")) {
        SceneObject o;
        o.bbox = need(jo, "bbox").get<std::array<double, 4>>();
        o.category_id = need(jo, "category").get<int>();
        s.objects.push_back(o);
      }
      for (const auto& jt : need(j, "tasks")) {
        TaskSpec task = make_task_spec(table, need(jt, "affordance").get<int>(),
                                       need(jt, "context").get<int>());
        RankAnnotation ann;
        ann.ranks = need(jt, "ranks").get<std::vector<int>>();
        ann.relevant = need(jt, "relevant").get<std::vector<bool>>();
        s.tasks.emplace_back(std::move(task), std::move(ann));
      }
      out.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw std::runtime_error(where + ": " + e.what());
    }
  }
  return out;
}

void save_rank_table(const RankTable& table, const std::string& path) {
  json j = json::object();
  for (const auto& [key, r] : table.ranks) {
    std::ostringstream k;
    k << key[0] << ":" << key[1] << ":" << key[2];
    j[k.str()] = r;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_rank_table: cannot write " + path);
  out << j.dump(2) << "\n";
}

RankTable load_rank_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_rank_table: cannot read " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::runtime_error("load_rank_table: " + std::string(e.what()));
  }
  RankTable table;
  for (const auto& [key, val] : j.items()) {
    std::array<int, 3> k{};
    char c1 = 0, c2 = 0;
    std::istringstream is(key);
    is >> k[0] >> c1 >> k[1] >> c2 >> k[2];
    if (is.fail() || c1 != ':' || c2 != ':')
      throw std::runtime_error("load_rank_table: malformed key \"" + key + "\"");
    table.ranks[k] = val.get<int>();
    table.n_affordances = std::max(table.n_affordances, k[0] + 1);
    table.contexts_per_affordance = std::max(table.contexts_per_affordance, k[1] + 1);
    table.n_categories = std::max(table.n_categories, k[2] + 1);
  }
  return table;
}

void validate_dataset(const std::vector<SceneSample>& samples) {
  for (const auto& s : samples) {
    const std::string where = "validate_dataset: scene " + s.scene_id;
    if (s.objects.size() < 2) throw std::runtime_error(where + ": fewer than two objects");
    if (s.tasks.empty()) throw std::runtime_error(where + ": no task annotations");
    for (const auto& o : s.objects) {
      const auto [cx, cy, w, h] = o.bbox;
      if (w <= 0 || h <= 0 || cx - w / 2 < -1e-9 || cx + w / 2 > 1 + 1e-9 ||
          cy - h / 2 < -1e-9 || cy + h / 2 > 1 + 1e-9)
        throw std::runtime_error(where + ": box outside the unit square");
    }
    for (const auto& [task, ann] : s.tasks) {
      (void)task;
      if (ann.ranks.size() != s.objects.size() || ann.relevant.size() != s.objects.size())
        throw std::runtime_error(where + ": annotation does not cover every object");
      std::set<int> levels;
      for (std::size_t i = 0; i < ann.ranks.size(); ++i) {
        const int r = ann.ranks[i];
        if (r < 1 || r > kIrrelevantRank)
          throw std::runtime_error(where + ": rank outside 1..8");
        if (ann.relevant[i] != (r <= kMaxRankLevel))
          throw std::runtime_error(where + ": relevance flag contradicts rank");
        if (r <= kMaxRankLevel) levels.insert(r);
      }
      if (levels.size() < 2)
        throw std::runtime_error(where + ": single rank level among relevant objects");
    }
  }
}

}  // namespace cgr
