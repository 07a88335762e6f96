#pragma once

// Deterministic hop-by-hop retrieval. Each active path keeps its best B
// one-step extensions, the pooled extensions are ranked globally and the
// best A form the next active set. The candidate pool is the union of the
// active sets of every hop.

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "cpr/embed.hpp"
#include "cpr/hints.hpp"
#include "cpr/path.hpp"
#include "cpr/query.hpp"
#include "cpr/rcvnet.hpp"

namespace cpr {

struct TreeGConfig {
  std::size_t branch_out = 32;  // B
  std::size_t active_set = 32;  // A
  std::size_t max_hop = 2;      // H
  double hint_weight = 0.1;     // beta

  /// Throws ConfigError unless B, A, H >= 1 and beta >= 0.
  void validate() const;
};

struct ScoredPath {
  Path path;
  double v = 0.0;
  double hint_bonus = 0.0;
  double v_prime = 0.0;  // v - beta * hint_bonus
};

/// Sum over the path's relations of the best similarity to any hint; 0 for
/// an empty hint set.
double hint_bonus(const SemanticIndex& index, const Path& p, const HintSet& hints);

/// v - beta * bonus. Throws ConfigError for negative beta.
double score_hinted(double v, double bonus, double beta);

/// Orders by v', then by path.
bool ranks_before(const ScoredPath& a, const ScoredPath& b);

/// Candidate pool for `q`, grouped by hop and ranked within each hop.
/// `params` null scores with the semantic baseline.
std::vector<ScoredPath> retrieve(const FeatureExtractor& fx, const Query& q, const RcvnetParams* params,
                                 const HintSet& hints, const TreeGConfig& cfg);

struct QueryPool {
  std::string query_id;
  HintSet hints;
  std::vector<ScoredPath> paths;
};

/// One JSON object per query: {"query_id", "hints", "paths": [{"path",
/// "v", "hint_bonus", "v_prime"}]}.
void write_pools_jsonl(std::ostream& out, const KnowledgeGraph& g, const std::vector<QueryPool>& pools);
std::vector<QueryPool> read_pools_jsonl(std::istream& in, const KnowledgeGraph& g);

}  // namespace cpr
