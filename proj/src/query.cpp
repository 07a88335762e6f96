#include "cpr/query.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <istream>
#include <limits>
#include <nlohmann/json.hpp>
#include <ostream>

#include "cpr/error.hpp"
#include "cpr/log.hpp"
#include "cpr/rng.hpp"

namespace cpr {

using nlohmann::json;

bool Query::is_answer(EntityId e) const { return std::binary_search(answers.begin(), answers.end(), e); }

void normalize(Query& q) {
  auto tidy = [](std::vector<EntityId>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  tidy(q.topic_entities);
  tidy(q.answers);
}

DatasetSplit split_dataset(const std::vector<Query>& queries, CalibrationSize size, std::uint64_t seed) {
  const std::size_t n = queries.size();
  if (n < 2) throw ConfigError("split_dataset needs at least two queries, got " + std::to_string(n));

  std::size_t n_cal = 0;
  if (size.count) {
    n_cal = *size.count;
  } else if (size.fraction) {
    const double f = *size.fraction;
    if (!(f > 0.0 && f < 1.0)) {
      throw ConfigError("calibration fraction must lie in (0,1), got " + std::to_string(f));
    }
    n_cal = static_cast<std::size_t>(std::llround(f * static_cast<double>(n)));
  } else {
    throw ConfigError("calibration size needs a fraction or a count");
  }
  if (n_cal == 0 || n_cal >= n) {
    throw ConfigError("calibration size " + std::to_string(n_cal) + " leaves an empty side of " +
                      std::to_string(n) + " queries");
  }

  // partial Fisher-Yates over indices picks a uniform n_cal-subset
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  for (std::size_t i = 0; i < n_cal; ++i) {
    std::swap(idx[i], idx[i + rng.uniform_index(n - i)]);
  }
  std::vector<bool> is_cal(n, false);
  for (std::size_t i = 0; i < n_cal; ++i) is_cal[idx[i]] = true;

  DatasetSplit split;
  for (std::size_t i = 0; i < n; ++i) {
    (is_cal[i] ? split.calibration : split.train).push_back(queries[i]);
  }
  return split;
}

std::vector<Path> ground_truth_paths(const KnowledgeGraph& g, const Query& q, std::size_t max_hop,
                                     std::size_t cap) {
  std::vector<Path> found;
  if (max_hop == 0 || cap == 0 || q.answers.empty()) return found;

  // hops-to-answer over reversed edges; prunes walks that cannot finish in budget
  constexpr std::size_t kFar = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> dist(g.entity_count(), kFar);
  std::vector<std::vector<EntityId>> reverse(g.entity_count());
  for (const Triple& t : g.triples()) reverse[t.tail.value].push_back(t.head);
  std::deque<EntityId> frontier;
  for (EntityId a : q.answers) {
    if (g.contains(a)) {
      dist[a.value] = 0;
      frontier.push_back(a);
    }
  }
  while (!frontier.empty()) {
    const EntityId e = frontier.front();
    frontier.pop_front();
    if (dist[e.value] >= max_hop) continue;
    for (EntityId h : reverse[e.value]) {
      if (dist[h.value] == kFar) {
        dist[h.value] = dist[e.value] + 1;
        frontier.push_back(h);
      }
    }
  }

  std::vector<Path> level;
  for (EntityId t : q.topic_entities) {
    if (g.contains(t) && dist[t.value] <= max_hop) level.emplace_back(t);
  }
  // Level order with sorted parents and sorted adjacency yields paths in
  // (hop count, lexicographic) order without an explicit sort.
  for (std::size_t hop = 1; hop <= max_hop && !level.empty(); ++hop) {
    std::vector<Path> next;
    for (const Path& p : level) {
      for (const Edge& edge : g.neighbors(p.terminal())) {
        if (dist[edge.tail.value] > max_hop - hop) continue;
        Path ext = p.with_step(edge.relation, edge.tail);
        if (q.is_answer(edge.tail)) {
          found.push_back(ext);
          if (found.size() == cap) return found;
        }
        next.push_back(std::move(ext));
      }
    }
    level = std::move(next);
  }
  return found;
}

namespace {

std::vector<EntityId> resolve_labels(const json& arr, const KnowledgeGraph& g, const std::string& qid,
                                     const char* field) {
  std::vector<EntityId> ids;
  if (!arr.is_array()) throw LoadError("query '" + qid + "': field '" + field + "' must be an array");
  for (const auto& item : arr) {
    if (!item.is_string()) throw LoadError("query '" + qid + "': '" + field + "' entries must be strings");
    const auto label = item.get<std::string>();
    if (auto e = g.find_entity(label)) {
      ids.push_back(*e);
    } else {
      warn("query '" + qid + "': " + field + " label '" + label + "' is not in the graph; dropped");
    }
  }
  return ids;
}

}  // namespace

std::vector<Query> load_queries(std::istream& in, const KnowledgeGraph& g) {
  std::vector<Query> queries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw LoadError("query line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!obj.is_object() || !obj.contains("id") || !obj.contains("topic_entities")) {
      throw LoadError("query line " + std::to_string(line_no) + ": needs 'id' and 'topic_entities'");
    }
    Query q;
    q.id = obj["id"].is_string() ? obj["id"].get<std::string>() : obj["id"].dump();
    q.question = obj.value("question", std::string{});
    q.topic_entities = resolve_labels(obj["topic_entities"], g, q.id, "topic_entities");
    if (obj.contains("answers")) q.answers = resolve_labels(obj["answers"], g, q.id, "answers");
    normalize(q);
    queries.push_back(std::move(q));
  }
  return queries;
}

std::vector<Query> load_queries_file(const std::string& path, const KnowledgeGraph& g) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open query file '" + path + "'", true);
  return load_queries(in, g);
}

void write_queries(std::ostream& out, const KnowledgeGraph& g, const std::vector<Query>& queries) {
  for (const Query& q : queries) {
    nlohmann::ordered_json obj;
    obj["id"] = q.id;
    obj["question"] = q.question;
    auto topics = nlohmann::ordered_json::array();
    for (EntityId e : q.topic_entities) topics.push_back(g.entity_label(e));
    auto answers = nlohmann::ordered_json::array();
    for (EntityId e : q.answers) answers.push_back(g.entity_label(e));
    obj["topic_entities"] = std::move(topics);
    obj["answers"] = std::move(answers);
    out << obj.dump() << '\n';
  }
}

void sort_by_id(std::vector<Query>& queries) {
  std::stable_sort(queries.begin(), queries.end(), [](const Query& a, const Query& b) { return a.id < b.id; });
}

}  // namespace cpr
