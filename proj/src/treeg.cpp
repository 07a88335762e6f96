#include "cpr/treeg.hpp"

#include <algorithm>
#include <istream>
#include <nlohmann/json.hpp>
#include <ostream>
#include <unordered_map>

#include "cpr/error.hpp"
#include "cpr/log.hpp"

namespace cpr {

void TreeGConfig::validate() const {
  if (branch_out < 1 || active_set < 1 || max_hop < 1) {
    throw ConfigError("branch-out, active set and max hop must all be at least 1");
  }
  if (!(hint_weight >= 0.0)) throw ConfigError("hint weight must be non-negative");
}

double hint_bonus(const SemanticIndex& index, const Path& p, const HintSet& hints) {
  if (hints.empty()) return 0.0;
  double total = 0.0;
  for (const Step& s : p.steps()) {
    const Embedding& r = index.relation(s.relation);
    double best = -1.0;
    for (const std::string& h : hints) best = std::max(best, similarity(r, index.text(h)));
    total += best;
  }
  return total;
}

double score_hinted(double v, double bonus, double beta) {
  if (!(beta >= 0.0)) throw ConfigError("hint weight must be non-negative");
  return v - beta * bonus;
}

bool ranks_before(const ScoredPath& a, const ScoredPath& b) {
  if (a.v_prime != b.v_prime) return a.v_prime < b.v_prime;
  return a.path < b.path;
}

std::vector<ScoredPath> retrieve(const FeatureExtractor& fx, const Query& q, const RcvnetParams* params,
                                 const HintSet& hints, const TreeGConfig& cfg) {
  cfg.validate();
  const SemanticIndex& index = fx.index();
  const KnowledgeGraph& g = index.graph();

  std::vector<Path> active;
  for (EntityId e : q.topic_entities) {
    if (g.contains(e)) active.emplace_back(e);
  }
  if (active.empty()) {
    warn("query '" + q.id + "': no topic entity in the graph; empty pool");
    return {};
  }
  if (active.size() > cfg.active_set) {
    warn("query '" + q.id + "': " + std::to_string(active.size()) + " topic entities exceed the active set; " +
         "keeping the first " + std::to_string(cfg.active_set));
    active.resize(cfg.active_set);
  }

  PathScorer scorer(fx, q, params);
  // Per-relation hint term, shared by every path through that relation.
  std::unordered_map<RelationId, double> relation_bonus;
  auto bonus_of = [&](const Path& p) {
    if (hints.empty()) return 0.0;
    double total = 0.0;
    for (const Step& s : p.steps()) {
      auto it = relation_bonus.find(s.relation);
      if (it == relation_bonus.end()) {
        it = relation_bonus.emplace(s.relation, hint_bonus(index, Path(p.origin(), {s}), hints)).first;
      }
      total += it->second;
    }
    return total;
  };

  std::vector<ScoredPath> pool;
  for (std::size_t hop = 1; hop <= cfg.max_hop && !active.empty(); ++hop) {
    std::vector<ScoredPath> candidates;
    for (const Path& a : active) {
      std::vector<ScoredPath> ext;
      for (const Edge& e : g.neighbors(a.terminal())) {
        ScoredPath sp;
        sp.path = a.with_step(e.relation, e.tail);
        sp.v = scorer.score(sp.path);
        sp.hint_bonus = bonus_of(sp.path);
        sp.v_prime = score_hinted(sp.v, sp.hint_bonus, cfg.hint_weight);
        ext.push_back(std::move(sp));
      }
      const std::size_t keep = std::min(cfg.branch_out, ext.size());
      std::partial_sort(ext.begin(), ext.begin() + static_cast<std::ptrdiff_t>(keep), ext.end(), ranks_before);
      ext.resize(keep);
      std::move(ext.begin(), ext.end(), std::back_inserter(candidates));
    }
    if (candidates.size() > cfg.active_set * cfg.branch_out) {
      throw ContractError("frontier bound violated: " + std::to_string(candidates.size()) + " candidates at hop " +
                          std::to_string(hop));
    }
    const std::size_t keep = std::min(cfg.active_set, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      ranks_before);
    candidates.resize(keep);
    active.clear();
    for (const ScoredPath& sp : candidates) active.push_back(sp.path);
    std::move(candidates.begin(), candidates.end(), std::back_inserter(pool));
  }
  if (pool.size() > cfg.max_hop * cfg.active_set) {
    throw ContractError("pool bound violated: " + std::to_string(pool.size()) + " paths");
  }
  return pool;
}

void write_pools_jsonl(std::ostream& out, const KnowledgeGraph& g, const std::vector<QueryPool>& pools) {
  for (const QueryPool& qp : pools) {
    nlohmann::ordered_json obj;
    obj["query_id"] = qp.query_id;
    obj["hints"] = qp.hints;
    auto paths = nlohmann::ordered_json::array();
    for (const ScoredPath& sp : qp.paths) {
      nlohmann::ordered_json p;
      p["path"] = path_labels(g, sp.path);
      p["v"] = sp.v;
      p["hint_bonus"] = sp.hint_bonus;
      p["v_prime"] = sp.v_prime;
      paths.push_back(std::move(p));
    }
    obj["paths"] = std::move(paths);
    out << obj.dump() << '\n';
  }
}

std::vector<QueryPool> read_pools_jsonl(std::istream& in, const KnowledgeGraph& g) {
  std::vector<QueryPool> pools;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto obj = nlohmann::json::parse(line);
      QueryPool qp;
      qp.query_id = obj.at("query_id").get<std::string>();
      qp.hints = obj.value("hints", HintSet{});
      for (const auto& p : obj.at("paths")) {
        ScoredPath sp;
        sp.path = path_from_labels(g, p.at("path").get<std::vector<std::string>>());
        sp.v = p.at("v").get<double>();
        sp.hint_bonus = p.at("hint_bonus").get<double>();
        sp.v_prime = p.at("v_prime").get<double>();
        qp.paths.push_back(std::move(sp));
      }
      pools.push_back(std::move(qp));
    } catch (const nlohmann::json::exception& e) {
      throw LoadError("pool line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return pools;
}

}  // namespace cpr
