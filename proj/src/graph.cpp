#include "cpr/graph.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>

#include "cpr/error.hpp"

namespace cpr {

std::uint32_t LabelTable::intern(std::string_view label) {
  if (auto it = index_.find(std::string(label)); it != index_.end()) return it->second;
  const auto id = static_cast<std::uint32_t>(labels_.size());
  labels_.emplace_back(label);
  index_.emplace(labels_.back(), id);
  return id;
}

std::optional<std::uint32_t> LabelTable::find(std::string_view label) const {
  if (auto it = index_.find(std::string(label)); it != index_.end()) return it->second;
  return std::nullopt;
}

const std::string& KnowledgeGraph::entity_label(EntityId e) const {
  if (!contains(e)) throw LookupError("unknown entity id " + std::to_string(e.value));
  return entities_.label(e.value);
}

const std::string& KnowledgeGraph::relation_label(RelationId r) const {
  if (!contains(r)) throw LookupError("unknown relation id " + std::to_string(r.value));
  return relations_.label(r.value);
}

std::optional<EntityId> KnowledgeGraph::find_entity(std::string_view label) const {
  if (auto id = entities_.find(label)) return EntityId{*id};
  return std::nullopt;
}

std::optional<RelationId> KnowledgeGraph::find_relation(std::string_view label) const {
  if (auto id = relations_.find(label)) return RelationId{*id};
  return std::nullopt;
}

EntityId KnowledgeGraph::entity(std::string_view label) const {
  if (auto e = find_entity(label)) return *e;
  throw LookupError("unknown entity '" + std::string(label) + "'");
}

RelationId KnowledgeGraph::relation(std::string_view label) const {
  if (auto r = find_relation(label)) return *r;
  throw LookupError("unknown relation '" + std::string(label) + "'");
}

std::span<const Edge> KnowledgeGraph::neighbors(EntityId e) const {
  if (!contains(e)) throw LookupError("unknown entity id " + std::to_string(e.value));
  const std::span<const Edge> all(edges_);
  return all.subspan(offsets_[e.value], offsets_[e.value + 1] - offsets_[e.value]);
}

bool KnowledgeGraph::has_triple(EntityId head, RelationId relation, EntityId tail) const {
  if (!contains(head)) return false;
  const auto adj = neighbors(head);
  return std::binary_search(adj.begin(), adj.end(), Edge{relation, tail});
}

void KnowledgeGraph::write_tsv(std::ostream& out) const {
  for (const Triple& t : triples_) {
    out << entities_.label(t.head.value) << '\t' << relations_.label(t.relation.value) << '\t'
        << entities_.label(t.tail.value) << '\n';
  }
}

void GraphBuilder::add(std::string_view head, std::string_view relation, std::string_view tail) {
  const EntityId h{entities_.intern(head)};
  const RelationId r{relations_.intern(relation)};
  const EntityId t{entities_.intern(tail)};
  triples_.push_back({h, r, t});
}

EntityId GraphBuilder::add_entity(std::string_view label) { return EntityId{entities_.intern(label)}; }

RelationId GraphBuilder::add_relation(std::string_view label) { return RelationId{relations_.intern(label)}; }

KnowledgeGraph GraphBuilder::build() && {
  KnowledgeGraph g;
  g.entities_ = std::move(entities_);
  g.relations_ = std::move(relations_);
  g.triples_ = std::move(triples_);
  std::sort(g.triples_.begin(), g.triples_.end());
  g.triples_.erase(std::unique(g.triples_.begin(), g.triples_.end()), g.triples_.end());

  const std::size_t n = g.entities_.size();
  g.offsets_.assign(n + 1, 0);
  g.edges_.reserve(g.triples_.size());
  for (const Triple& t : g.triples_) {
    ++g.offsets_[t.head.value + 1];
    g.edges_.push_back({t.relation, t.tail});
  }
  for (std::size_t i = 0; i < n; ++i) g.offsets_[i + 1] += g.offsets_[i];
  return g;
}

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

}  // namespace

KnowledgeGraph load_graph(std::istream& in) {
  GraphBuilder builder;
  std::string line;
  std::size_t line_no = 0;
  std::size_t records = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty() || fields[2].empty()) {
      throw LoadError("malformed triple at line " + std::to_string(line_no) +
                      ": expected head<TAB>relation<TAB>tail");
    }
    builder.add(fields[0], fields[1], fields[2]);
    ++records;
  }
  if (records == 0) throw LoadError("empty graph: no triples in input");
  return std::move(builder).build();
}

KnowledgeGraph load_graph_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open graph file '" + path + "'", true);
  return load_graph(in);
}

}  // namespace cpr
