#pragma once

// PUCT-guided trajectory collection: rollouts over the graph that
// accumulate per-relation Beta-Bernoulli success counts, followed by
// construction of positive / negative path pairs for value-network training.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cpr/embed.hpp"
#include "cpr/graph.hpp"
#include "cpr/path.hpp"
#include "cpr/query.hpp"
#include "cpr/rng.hpp"

namespace cpr {

struct BetaCounts {
  double alpha = 1.0;
  double beta = 1.0;
  bool operator==(const BetaCounts&) const = default;
};

/// Per-relation Beta(alpha, beta) counts, all starting at Beta(1, 1).
class BetaPrior {
 public:
  BetaPrior() = default;
  explicit BetaPrior(std::size_t relation_count) : counts_(relation_count) {}

  std::size_t size() const { return counts_.size(); }
  /// Counts for `r`; Beta(1, 1) for relations never recorded.
  BetaCounts counts(RelationId r) const;
  void record(RelationId r, bool success);
  void set(RelationId r, BetaCounts c);

  /// Posterior mean alpha / (alpha + beta).
  double rho(RelationId r) const;

  /// Sum over relations of (alpha + beta - 2).
  double total_updates() const;

  bool operator==(const BetaPrior&) const = default;

  /// `relation<TAB>alpha<TAB>beta`, one line per relation id.
  void write_tsv(std::ostream& out, const KnowledgeGraph& g) const;
  static BetaPrior read_tsv(std::istream& in, const KnowledgeGraph& g);

 private:
  std::vector<BetaCounts> counts_;
};

/// Posterior mean of a Beta(alpha, beta).
inline double rho(const BetaPrior& prior, RelationId r) { return prior.rho(r); }

struct RolloutConfig {
  double c_puct = 2.0;
  std::size_t rollouts_per_query = 32;
  std::size_t max_hop = 2;
};

/// Visit count N(p,r) and cumulative binary reward W(p,r).
struct EdgeStats {
  std::uint32_t visits = 0;
  double reward = 0.0;
  double q() const { return visits == 0 ? 0.0 : reward / visits; }
};

/// Per-query search statistics keyed by (relation-sequence prefix, relation).
class NodeStats {
 public:
  using Signature = std::vector<std::uint32_t>;

  EdgeStats get(const Signature& prefix, RelationId r) const;
  void record(const Signature& prefix, RelationId r, bool reward);
  /// N(p) = sum over `candidates` of N(p, r).
  std::uint64_t total_visits(const Signature& prefix, std::span<const RelationId> candidates) const;
  std::size_t size() const { return cells_.size(); }

  static Signature signature_of(const Path& p);

  template <class F>
  void for_each(F&& f) const {
    for (const auto& [key, stats] : cells_) f(key.first, key.second, stats);
  }

 private:
  std::map<std::pair<Signature, RelationId>, EdgeStats> cells_;
};

/// Numerically stable softmax with temperature 1.
std::vector<double> softmax(std::span<const double> scores);

/// Semantic prior over candidate relations: softmax of
/// s(question, r') + s(question, relation text of p). Throws ContractError
/// on an empty candidate set.
std::vector<double> semantic_prior(const SemanticIndex& index, const Embedding& question, const Path& p,
                                   std::span<const RelationId> candidates);

/// argmax of Q + c_puct * P * sqrt(N) / (1 + N(r)) over candidates. Exact
/// score ties go to the higher prior, then to the lower relation id.
RelationId puct_select(std::span<const RelationId> candidates, std::span<const double> prior,
                       std::span<const EdgeStats> stats, double c_puct);

struct Rollout {
  Path path;
  bool reward = false;
};

/// One simulation from a seeded-uniform topic entity. Stops at the first
/// answer, a dead end or max_hop. Does not touch the statistics.
Rollout rollout(const SemanticIndex& index, const Query& q, const Embedding& question, const NodeStats& stats,
                const RolloutConfig& cfg, Rng& rng);

/// N += 1 and W += reward for every (prefix, relation) along the path.
void backup(NodeStats& stats, const Path& path, bool reward);

/// Each distinct relation on the path gets alpha += 1 on success, beta += 1
/// otherwise.
void update_beta(BetaPrior& prior, const Path& path, bool reward);

struct PairCaps {
  std::size_t max_positives = 8;
  std::size_t neg_per_pos = 16;
  std::size_t ground_truth_cap = 64;
};

struct PathPairSet {
  std::string query_id;
  std::vector<Path> positives;
  std::vector<Path> negatives;
  /// (positive index, negative index)
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  bool skipped = false;
};

/// Positives are the shortest ground-truth paths (the reference path and
/// same-length alternates). Each positive's last hop is swapped for a
/// different edge whose tail is not an answer to form its negatives, sampled
/// up to caps.neg_per_pos per positive.
PathPairSet collect_pairs(const KnowledgeGraph& g, const Query& q, std::size_t max_hop, const PairCaps& caps,
                          std::uint64_t seed);

struct CollectionResult {
  BetaPrior prior;
  std::vector<PathPairSet> pairs;
};

/// Runs rollouts_per_query rollouts per training query (fresh NodeStats per
/// query), folds the Beta updates in query-id order, then collects pairs.
/// `workers` > 1 parallelizes over queries without changing the result.
CollectionResult run_collection(const SemanticIndex& index, std::vector<Query> train, const RolloutConfig& cfg,
                                const PairCaps& caps, std::uint64_t seed, std::size_t workers = 1);

void write_pairs_jsonl(std::ostream& out, const KnowledgeGraph& g, const std::vector<PathPairSet>& sets);
std::vector<PathPairSet> read_pairs_jsonl(std::istream& in, const KnowledgeGraph& g);

}  // namespace cpr
