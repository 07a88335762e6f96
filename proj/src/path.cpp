#include "cpr/path.hpp"

#include <algorithm>

#include "cpr/error.hpp"

namespace cpr {

std::vector<RelationId> Path::relations() const {
  std::vector<RelationId> rels;
  rels.reserve(steps_.size());
  for (const Step& s : steps_) rels.push_back(s.relation);
  return rels;
}

Path Path::prefix(std::size_t n) const {
  n = std::min(n, steps_.size());
  return Path(origin_, std::vector<Step>(steps_.begin(), steps_.begin() + static_cast<std::ptrdiff_t>(n)));
}

Path Path::with_step(RelationId r, EntityId e) const {
  Path next = *this;
  next.steps_.push_back({r, e});
  return next;
}

Path extend(const KnowledgeGraph& g, const Path& p, RelationId r, EntityId e, std::size_t max_hop) {
  if (p.hops() >= max_hop) {
    throw BudgetError("cannot extend a " + std::to_string(p.hops()) + "-hop path beyond max_hop " +
                      std::to_string(max_hop));
  }
  if (!g.has_triple(p.terminal(), r, e)) {
    throw ContractError("extension is not an edge of the graph");
  }
  return p.with_step(r, e);
}

std::vector<RelationId> available_relations(const KnowledgeGraph& g, const Path& p) {
  std::vector<RelationId> rels;
  for (const Edge& edge : g.neighbors(p.terminal())) {
    // adjacency is sorted by relation, so duplicates are adjacent
    if (rels.empty() || rels.back() != edge.relation) rels.push_back(edge.relation);
  }
  return rels;
}

bool is_valid_path(const KnowledgeGraph& g, const Path& p) {
  if (!g.contains(p.origin())) return false;
  EntityId at = p.origin();
  for (const Step& s : p.steps()) {
    if (!g.has_triple(at, s.relation, s.entity)) return false;
    at = s.entity;
  }
  return true;
}

std::vector<std::string> path_labels(const KnowledgeGraph& g, const Path& p) {
  std::vector<std::string> labels;
  labels.reserve(1 + 2 * p.hops());
  labels.push_back(g.entity_label(p.origin()));
  for (const Step& s : p.steps()) {
    labels.push_back(g.relation_label(s.relation));
    labels.push_back(g.entity_label(s.entity));
  }
  return labels;
}

Path path_from_labels(const KnowledgeGraph& g, const std::vector<std::string>& labels) {
  if (labels.empty() || labels.size() % 2 == 0) {
    throw ParseError("a path needs an odd number of labels (entity, relation, entity, ...)");
  }
  Path p(g.entity(labels[0]));
  for (std::size_t i = 1; i + 1 < labels.size(); i += 2) {
    p = p.with_step(g.relation(labels[i]), g.entity(labels[i + 1]));
  }
  return p;
}

}  // namespace cpr
