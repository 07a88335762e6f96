#pragma once

// Seeded synthetic KGQA benchmark. Relation labels are "domain.type.property"
// triples of words, grouped by (domain, type); each group holds core
// relations used on gold chains and peripheral ones that only appear as
// distractors. Every query gets a fresh topic entity, a gold chain of fresh
// entities and distractor edges into a shared background graph. The question
// text is the topic label followed by the gold relation words, plus one decoy
// word per hop: the property word of a peripheral relation from the gold
// relation's group. Confusable distractors use exactly that decoy relation, so
// surface similarity cannot tell them from the gold edge.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "cpr/graph.hpp"
#include "cpr/path.hpp"
#include "cpr/query.hpp"

namespace cpr {

struct SynthConfig {
  std::size_t n_entities = 2000;  // background entities
  std::size_t n_relations = 60;
  std::size_t n_queries = 2000;
  std::size_t min_hop = 1;
  std::size_t max_hop = 2;
  double branching = 4.0;  // mean out-degree of background and chain entities
  std::size_t answer_multiplicity = 1;
  double confusability = 0.3;  // chance a distractor edge is the hop's decoy relation
  bool shared_intermediates = false;  // gold chains may pass through background entities
  std::uint64_t seed = 0;

  /// Throws ConfigError for contradictory settings.
  void validate() const;
};

struct SynthDataset {
  SynthConfig config;
  KnowledgeGraph graph;
  std::vector<Query> queries;  // ordered by id
  std::vector<Path> gold_paths;  // aligned with queries
};

SynthDataset generate(const SynthConfig& cfg);

struct SynthReport {
  double reachability = 0.0;
  std::map<std::size_t, std::size_t> depth_histogram;  // shortest answer path length -> queries
  double mean_out_degree = 0.0;
  double confusability_estimate = 0.0;
  bool ok = false;
};

/// Breadth-first reachability of an answer within max_hop for every query,
/// plus summary statistics. ok is false unless every query is reachable.
SynthReport verify(const KnowledgeGraph& g, const std::vector<Query>& queries, const std::vector<Path>& gold_paths,
                   std::size_t max_hop);

/// Config, seed and counts as JSON.
void write_manifest(std::ostream& out, const SynthDataset& ds, const SynthReport& report);

}  // namespace cpr
