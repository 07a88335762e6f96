#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cpr/graph.hpp"
#include "cpr/path.hpp"

namespace cpr {

struct Query {
  std::string id;
  std::string question;
  std::vector<EntityId> topic_entities;  // sorted, unique
  std::vector<EntityId> answers;         // sorted, unique

  bool is_answer(EntityId e) const;
};

/// Sorts and deduplicates the entity lists of `q` in place.
void normalize(Query& q);

struct DatasetSplit {
  std::vector<Query> train;
  std::vector<Query> calibration;
  std::vector<Query> test;
};

/// How many queries go to calibration: a fraction in (0,1), rounded to the
/// nearest integer, or an explicit count.
struct CalibrationSize {
  std::optional<double> fraction;
  std::optional<std::size_t> count;

  static CalibrationSize of_fraction(double f) { return {f, std::nullopt}; }
  static CalibrationSize of_count(std::size_t n) { return {std::nullopt, n}; }
};

/// Seeded uniform sample of calibration queries from `queries`; the rest
/// become train. Both parts keep the input order. Throws ConfigError for
/// fewer than two queries, a fraction outside (0,1) or a count that would
/// leave either side empty.
DatasetSplit split_dataset(const std::vector<Query>& queries, CalibrationSize size, std::uint64_t seed);

/// BFS enumeration of paths with 1..max_hop steps from any topic entity that
/// end in an answer entity. Ordered by hop count, then lexicographically;
/// truncated to `cap` paths.
std::vector<Path> ground_truth_paths(const KnowledgeGraph& g, const Query& q, std::size_t max_hop,
                                     std::size_t cap);

/// Reads JSON Lines queries (`id`, `question`, `topic_entities`, `answers`,
/// entity labels). Labels missing from `g` are dropped with a warning; a
/// query whose topic entities are all unknown keeps an empty topic list.
std::vector<Query> load_queries(std::istream& in, const KnowledgeGraph& g);
std::vector<Query> load_queries_file(const std::string& path, const KnowledgeGraph& g);
void write_queries(std::ostream& out, const KnowledgeGraph& g, const std::vector<Query>& queries);

/// Sorts by query id.
void sort_by_id(std::vector<Query>& queries);

}  // namespace cpr
