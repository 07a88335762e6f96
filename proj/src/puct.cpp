#include "cpr/puct.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>

#include "cpr/error.hpp"
#include "cpr/parallel.hpp"

namespace cpr {

BetaCounts BetaPrior::counts(RelationId r) const {
  if (r.value < counts_.size()) return counts_[r.value];
  return {};
}

void BetaPrior::record(RelationId r, bool success) {
  if (r.value >= counts_.size()) counts_.resize(r.value + 1);
  if (success) {
    counts_[r.value].alpha += 1.0;
  } else {
    counts_[r.value].beta += 1.0;
  }
}

void BetaPrior::set(RelationId r, BetaCounts c) {
  if (r.value >= counts_.size()) counts_.resize(r.value + 1);
  counts_[r.value] = c;
}

double BetaPrior::rho(RelationId r) const {
  const BetaCounts c = counts(r);
  return c.alpha / (c.alpha + c.beta);
}

double BetaPrior::total_updates() const {
  double total = 0.0;
  for (const BetaCounts& c : counts_) total += c.alpha + c.beta - 2.0;
  return total;
}

void BetaPrior::write_tsv(std::ostream& out, const KnowledgeGraph& g) const {
  std::ostringstream line;
  line.precision(17);
  for (std::uint32_t r = 0; r < g.relation_count(); ++r) {
    const BetaCounts c = counts(RelationId{r});
    line.str({});
    line << g.relation_label(RelationId{r}) << '\t' << c.alpha << '\t' << c.beta << '\n';
    out << line.str();
  }
}

BetaPrior BetaPrior::read_tsv(std::istream& in, const KnowledgeGraph& g) {
  BetaPrior prior(g.relation_count());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) throw LoadError("prior line " + std::to_string(line_no) + ": expected 3 fields");
    BetaCounts c;
    try {
      c.alpha = std::stod(line.substr(t1 + 1, t2 - t1 - 1));
      c.beta = std::stod(line.substr(t2 + 1));
    } catch (const std::exception&) {
      throw LoadError("prior line " + std::to_string(line_no) + ": counts must be numbers");
    }
    if (!(c.alpha >= 1.0 && c.beta >= 1.0)) {
      throw LoadError("prior line " + std::to_string(line_no) + ": counts must be >= 1");
    }
    prior.set(g.relation(line.substr(0, t1)), c);
  }
  return prior;
}

EdgeStats NodeStats::get(const Signature& prefix, RelationId r) const {
  if (auto it = cells_.find({prefix, r}); it != cells_.end()) return it->second;
  return {};
}

void NodeStats::record(const Signature& prefix, RelationId r, bool reward) {
  EdgeStats& s = cells_[{prefix, r}];
  s.visits += 1;
  if (reward) s.reward += 1.0;
}

std::uint64_t NodeStats::total_visits(const Signature& prefix, std::span<const RelationId> candidates) const {
  std::uint64_t n = 0;
  for (RelationId r : candidates) n += get(prefix, r).visits;
  return n;
}

NodeStats::Signature NodeStats::signature_of(const Path& p) {
  Signature sig;
  sig.reserve(p.hops());
  for (const Step& s : p.steps()) sig.push_back(s.relation.value);
  return sig;
}

std::vector<double> softmax(std::span<const double> scores) {
  std::vector<double> out(scores.size());
  if (scores.empty()) return out;
  const double top = *std::max_element(scores.begin(), scores.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(scores[i] - top);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return out;
}

std::vector<double> semantic_prior(const SemanticIndex& index, const Embedding& question, const Path& p,
                                   std::span<const RelationId> candidates) {
  if (candidates.empty()) throw ContractError("semantic_prior needs at least one candidate relation");
  const double path_term = similarity(question, index.path(p));
  std::vector<double> scores;
  scores.reserve(candidates.size());
  for (RelationId r : candidates) scores.push_back(similarity(question, index.relation(r)) + path_term);
  return softmax(scores);
}

RelationId puct_select(std::span<const RelationId> candidates, std::span<const double> prior,
                       std::span<const EdgeStats> stats, double c_puct) {
  if (candidates.empty() || prior.size() != candidates.size() || stats.size() != candidates.size()) {
    throw ContractError("puct_select needs matching, non-empty candidate / prior / stats lists");
  }
  std::uint64_t parent_visits = 0;
  for (const EdgeStats& s : stats) parent_visits += s.visits;
  const double sqrt_parent = std::sqrt(static_cast<double>(parent_visits));

  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double score = stats[i].q() + c_puct * prior[i] * sqrt_parent / (1.0 + stats[i].visits);
    bool better = score > best_score;
    if (!better && score == best_score) {
      better = prior[i] > prior[best] || (prior[i] == prior[best] && candidates[i] < candidates[best]);
    }
    if (better) {
      best = i;
      best_score = score;
    }
  }
  return candidates[best];
}

Rollout rollout(const SemanticIndex& index, const Query& q, const Embedding& question, const NodeStats& stats,
                const RolloutConfig& cfg, Rng& rng) {
  if (q.topic_entities.empty()) throw ContractError("rollout needs a topic entity");
  const KnowledgeGraph& g = index.graph();
  Rollout out;
  out.path = Path(q.topic_entities[rng.uniform_index(q.topic_entities.size())]);

  std::vector<EdgeStats> cell_stats;
  while (out.path.hops() < cfg.max_hop) {
    const auto candidates = available_relations(g, out.path);
    if (candidates.empty()) break;
    const auto prior = semantic_prior(index, question, out.path, candidates);
    const auto sig = NodeStats::signature_of(out.path);
    cell_stats.clear();
    for (RelationId r : candidates) cell_stats.push_back(stats.get(sig, r));
    const RelationId chosen = puct_select(candidates, prior, cell_stats, cfg.c_puct);

    const auto adj = g.neighbors(out.path.terminal());
    const auto lo = std::lower_bound(adj.begin(), adj.end(), Edge{chosen, EntityId{0}});
    auto hi = lo;
    while (hi != adj.end() && hi->relation == chosen) ++hi;
    const auto pick = lo + static_cast<std::ptrdiff_t>(rng.uniform_index(static_cast<std::size_t>(hi - lo)));
    out.path = out.path.with_step(chosen, pick->tail);
    if (q.is_answer(pick->tail)) break;
  }
  out.reward = out.path.hops() > 0 && q.is_answer(out.path.terminal());
  return out;
}

void backup(NodeStats& stats, const Path& path, bool reward) {
  NodeStats::Signature prefix;
  for (const Step& s : path.steps()) {
    stats.record(prefix, s.relation, reward);
    prefix.push_back(s.relation.value);
  }
}

void update_beta(BetaPrior& prior, const Path& path, bool reward) {
  auto rels = path.relations();
  std::sort(rels.begin(), rels.end());
  rels.erase(std::unique(rels.begin(), rels.end()), rels.end());
  for (RelationId r : rels) prior.record(r, reward);
}

PathPairSet collect_pairs(const KnowledgeGraph& g, const Query& q, std::size_t max_hop, const PairCaps& caps,
                          std::uint64_t seed) {
  PathPairSet set;
  set.query_id = q.id;
  const auto truth = ground_truth_paths(g, q, max_hop, caps.ground_truth_cap);
  if (truth.empty() || caps.max_positives == 0) {
    set.skipped = true;
    return set;
  }
  const std::size_t shortest = truth.front().hops();
  for (const Path& p : truth) {
    if (p.hops() != shortest || set.positives.size() == caps.max_positives) break;
    set.positives.push_back(p);
  }

  Rng rng(seed);
  std::map<Path, std::size_t> negative_index;
  for (std::size_t pi = 0; pi < set.positives.size(); ++pi) {
    const Path& pos = set.positives[pi];
    const Path prefix = pos.prefix(pos.hops() - 1);
    const Step last = pos.steps().back();
    std::vector<Edge> deviations;
    for (const Edge& e : g.neighbors(prefix.terminal())) {
      if (e.relation == last.relation && e.tail == last.entity) continue;
      if (q.is_answer(e.tail)) continue;
      deviations.push_back(e);
    }
    if (deviations.size() > caps.neg_per_pos) {
      rng.shuffle(std::span<Edge>(deviations));
      deviations.resize(caps.neg_per_pos);
      std::sort(deviations.begin(), deviations.end());
    }
    for (const Edge& e : deviations) {
      Path neg = prefix.with_step(e.relation, e.tail);
      auto [it, inserted] = negative_index.try_emplace(neg, set.negatives.size());
      if (inserted) set.negatives.push_back(std::move(neg));
      set.pairs.emplace_back(pi, it->second);
    }
  }
  // Nothing to contrast against: the query contributes no training signal.
  if (set.pairs.empty()) set.skipped = true;
  return set;
}

CollectionResult run_collection(const SemanticIndex& index, std::vector<Query> train, const RolloutConfig& cfg,
                                const PairCaps& caps, std::uint64_t seed, std::size_t workers) {
  if (cfg.c_puct < 0.0) throw ConfigError("c_puct must be non-negative");
  if (cfg.rollouts_per_query < 1) throw ConfigError("rollouts_per_query must be at least 1");
  if (cfg.max_hop < 1) throw ConfigError("max_hop must be at least 1");
  const KnowledgeGraph& g = index.graph();
  sort_by_id(train);

  // rollouts touch only per-query state, so they run in parallel; the
  // global prior is folded afterwards in query-id order
  std::vector<std::vector<Rollout>> per_query(train.size());
  CollectionResult result;
  result.pairs.resize(train.size());
  parallel_for(train.size(), workers, [&](std::size_t i) {
    const Query& q = train[i];
    const std::uint64_t qseed = derive_seed(seed, fnv1a(q.id));
    if (!q.topic_entities.empty()) {
      const Embedding& question = index.text(query_text(q));
      NodeStats stats;
      Rng rng(qseed);
      per_query[i].reserve(cfg.rollouts_per_query);
      for (std::size_t k = 0; k < cfg.rollouts_per_query; ++k) {
        Rollout r = rollout(index, q, question, stats, cfg, rng);
        backup(stats, r.path, r.reward);
        per_query[i].push_back(std::move(r));
      }
    }
    if (q.answers.empty() || q.topic_entities.empty()) {
      result.pairs[i].query_id = q.id;
      result.pairs[i].skipped = true;
    } else {
      result.pairs[i] = collect_pairs(g, q, cfg.max_hop, caps, derive_seed(qseed, 0x70616972ULL));
    }
  });

  result.prior = BetaPrior(g.relation_count());
  for (const auto& rollouts : per_query) {
    for (const Rollout& r : rollouts) update_beta(result.prior, r.path, r.reward);
  }
  return result;
}

void write_pairs_jsonl(std::ostream& out, const KnowledgeGraph& g, const std::vector<PathPairSet>& sets) {
  using ojson = nlohmann::ordered_json;
  for (const PathPairSet& set : sets) {
    if (set.skipped || set.positives.empty()) {
      ojson line;
      line["query_id"] = set.query_id;
      line["positive"] = ojson::array();
      line["negatives"] = ojson::array();
      line["skipped"] = true;
      out << line.dump() << '\n';
      continue;
    }
    for (std::size_t pi = 0; pi < set.positives.size(); ++pi) {
      ojson line;
      line["query_id"] = set.query_id;
      line["positive"] = path_labels(g, set.positives[pi]);
      ojson negs = ojson::array();
      for (const auto& [p, n] : set.pairs) {
        if (p == pi) negs.push_back(path_labels(g, set.negatives[n]));
      }
      line["negatives"] = std::move(negs);
      out << line.dump() << '\n';
    }
  }
}

std::vector<PathPairSet> read_pairs_jsonl(std::istream& in, const KnowledgeGraph& g) {
  std::vector<PathPairSet> sets;
  std::map<Path, std::size_t> negative_index;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw LoadError("pairs line " + std::to_string(line_no) + ": " + e.what());
    }
    const auto qid = obj.at("query_id").get<std::string>();
    if (sets.empty() || sets.back().query_id != qid) {
      sets.push_back({});
      sets.back().query_id = qid;
      negative_index.clear();
    }
    PathPairSet& set = sets.back();
    if (obj.value("skipped", false)) {
      set.skipped = true;
      continue;
    }
    const std::size_t pi = set.positives.size();
    set.positives.push_back(path_from_labels(g, obj.at("positive").get<std::vector<std::string>>()));
    for (const auto& neg : obj.at("negatives")) {
      Path p = path_from_labels(g, neg.get<std::vector<std::string>>());
      auto [it, inserted] = negative_index.try_emplace(p, set.negatives.size());
      if (inserted) set.negatives.push_back(std::move(p));
      set.pairs.emplace_back(pi, it->second);
    }
  }
  return sets;
}

}  // namespace cpr
