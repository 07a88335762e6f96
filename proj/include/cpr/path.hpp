#pragma once

#include <compare>
#include <cstddef>
#include <string>
#include <vector>

#include "cpr/graph.hpp"

namespace cpr {

struct Step {
  RelationId relation;
  EntityId entity;
  auto operator<=>(const Step&) const = default;
};

/// A reasoning path: an origin entity followed by (relation, entity) steps.
/// Paths order lexicographically by (origin, steps), which is the tie order
/// used everywhere a deterministic ranking is needed.
class Path {
 public:
  Path() = default;
  explicit Path(EntityId origin) : origin_(origin) {}
  Path(EntityId origin, std::vector<Step> steps) : origin_(origin), steps_(std::move(steps)) {}

  EntityId origin() const { return origin_; }
  const std::vector<Step>& steps() const { return steps_; }
  std::size_t hops() const { return steps_.size(); }
  bool empty() const { return steps_.empty(); }

  /// Last entity, or the origin for a zero-step path.
  EntityId terminal() const { return steps_.empty() ? origin_ : steps_.back().entity; }
  RelationId last_relation() const { return steps_.back().relation; }

  std::vector<RelationId> relations() const;

  /// First `n` steps.
  Path prefix(std::size_t n) const;

  /// Appends a step without validation. Prefer cpr::extend.
  Path with_step(RelationId r, EntityId e) const;

  auto operator<=>(const Path&) const = default;
  bool operator==(const Path&) const = default;

 private:
  EntityId origin_{};
  std::vector<Step> steps_;
};

inline EntityId terminal(const Path& p) { return p.terminal(); }

/// Returns `p` extended by (r, e). Throws ContractError when
/// (terminal(p), r, e) is not a triple of `g`, BudgetError when `p` already
/// has `max_hop` steps.
Path extend(const KnowledgeGraph& g, const Path& p, RelationId r, EntityId e, std::size_t max_hop);

/// Distinct relations on the outgoing edges of terminal(p), ascending.
std::vector<RelationId> available_relations(const KnowledgeGraph& g, const Path& p);

/// True when every consecutive (e, r, e') of `p` is a triple of `g`.
bool is_valid_path(const KnowledgeGraph& g, const Path& p);

/// Flat label list [e0, r1, e1, ..., rt, et] used by the JSON formats.
std::vector<std::string> path_labels(const KnowledgeGraph& g, const Path& p);
/// Inverse of path_labels. Throws LookupError / ParseError.
Path path_from_labels(const KnowledgeGraph& g, const std::vector<std::string>& labels);

}  // namespace cpr
