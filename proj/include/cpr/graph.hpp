#pragma once

// Knowledge-graph storage: interned entity / relation tables, deduplicated
// triples and a head-indexed adjacency (CSR) sorted by (relation, tail).

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cpr {

template <class Tag>
struct Id {
  std::uint32_t value = 0;
  auto operator<=>(const Id&) const = default;
};

using EntityId = Id<struct EntityTag>;
using RelationId = Id<struct RelationTag>;

struct Triple {
  EntityId head;
  RelationId relation;
  EntityId tail;
  auto operator<=>(const Triple&) const = default;
};

/// One outgoing edge of an entity.
struct Edge {
  RelationId relation;
  EntityId tail;
  auto operator<=>(const Edge&) const = default;
};

/// Bijective label <-> dense id table. Ids are assigned in first-seen order.
class LabelTable {
 public:
  std::uint32_t intern(std::string_view label);
  std::optional<std::uint32_t> find(std::string_view label) const;
  const std::string& label(std::uint32_t id) const { return labels_.at(id); }
  std::size_t size() const { return labels_.size(); }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;

  std::size_t entity_count() const { return entities_.size(); }
  std::size_t relation_count() const { return relations_.size(); }
  std::size_t triple_count() const { return triples_.size(); }

  const std::string& entity_label(EntityId e) const;
  const std::string& relation_label(RelationId r) const;

  std::optional<EntityId> find_entity(std::string_view label) const;
  std::optional<RelationId> find_relation(std::string_view label) const;
  /// Throws LookupError for unknown labels.
  EntityId entity(std::string_view label) const;
  RelationId relation(std::string_view label) const;

  bool contains(EntityId e) const { return e.value < entities_.size(); }
  bool contains(RelationId r) const { return r.value < relations_.size(); }

  /// Outgoing edges of `e`, sorted by (relation id, tail id). Throws
  /// LookupError for unknown entities.
  std::span<const Edge> neighbors(EntityId e) const;

  bool has_triple(EntityId head, RelationId relation, EntityId tail) const;

  /// Triples sorted by (head, relation, tail).
  std::span<const Triple> triples() const { return triples_; }

  /// Writes the graph as TSV in triple order.
  void write_tsv(std::ostream& out) const;

 private:
  friend class GraphBuilder;

  LabelTable entities_;
  LabelTable relations_;
  std::vector<Triple> triples_;
  std::vector<Edge> edges_;
  std::vector<std::size_t> offsets_;  // entity_count + 1 entries
};

/// Accumulates labelled triples and freezes them into a KnowledgeGraph.
class GraphBuilder {
 public:
  void add(std::string_view head, std::string_view relation, std::string_view tail);
  /// Registers an entity that may have no edges at all.
  EntityId add_entity(std::string_view label);
  RelationId add_relation(std::string_view label);

  KnowledgeGraph build() &&;

 private:
  LabelTable entities_;
  LabelTable relations_;
  std::vector<Triple> triples_;
};

/// Parses `head<TAB>relation<TAB>tail` lines. Blank lines are skipped.
/// Throws LoadError naming the line for malformed records and for input
/// without any triple.
KnowledgeGraph load_graph(std::istream& in);
KnowledgeGraph load_graph_file(const std::string& path);

}  // namespace cpr

template <class Tag>
struct std::hash<cpr::Id<Tag>> {
  std::size_t operator()(const cpr::Id<Tag>& id) const noexcept { return std::hash<std::uint32_t>{}(id.value); }
};
