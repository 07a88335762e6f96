#include "cpr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>
#include <set>
#include <string_view>

#include "cpr/embed.hpp"
#include "cpr/error.hpp"
#include "cpr/rng.hpp"

namespace cpr {

namespace {

// Word pools are pairwise disjoint so "token-disjoint" is decidable from the
// pool a word came from.
constexpr std::string_view kDomains[] = {"people", "location", "film",  "music",    "book",  "sports",
                                         "business", "education", "government", "medicine", "travel", "food"};
constexpr std::string_view kTypes[] = {"person", "place",   "team",    "award", "event",  "work",
                                       "company", "product", "language", "album", "country", "school"};
constexpr std::string_view kCoreProps[] = {
    "birthplace", "nationality", "director", "author",   "capital",  "founder",  "genre",    "spouse",
    "employer",   "currency",    "producer", "composer", "publisher", "coach",   "mayor",    "anthem",
    "religion",   "ethnicity",   "sibling",  "parent",   "successor", "sponsor", "venue",    "ingredient",
    "architect",  "editor",      "manager",  "owner",    "headquarters", "mascot"};
constexpr std::string_view kPeripheralProps[] = {"image",   "webpage", "alias",    "article", "notability",
                                                 "caption", "thumbnail", "synonym", "barcode", "checksum"};

struct Relation {
  std::string label;
  std::size_t group = 0;
  bool core = false;
  std::vector<std::string> words;
};

std::string padded(char prefix, std::size_t n, std::size_t width) {
  std::string digits = std::to_string(n);
  if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
  return prefix + digits;
}

std::size_t degree(Rng& rng, double branching) {
  const double base = std::floor(branching);
  return static_cast<std::size_t>(base) + (rng.bernoulli(branching - base) ? 1 : 0);
}

bool shares_domain_and_type(std::string_view a, std::string_view b) {
  auto head = [](std::string_view s) {
    const auto first = s.find('.');
    const auto second = first == std::string_view::npos ? first : s.find('.', first + 1);
    return s.substr(0, second);
  };
  return head(a) == head(b);
}

}  // namespace

void SynthConfig::validate() const {
  if (n_entities < 2 || n_queries < 1) throw ConfigError("synth needs at least 2 entities and 1 query");
  if (n_relations < 2) throw ConfigError("synth needs at least 2 relations");
  const std::size_t groups = (n_relations + 4) / 5;
  if (groups > std::size(kDomains) * std::size(kTypes)) {
    throw ConfigError("synth supports at most " + std::to_string(5 * std::size(kDomains) * std::size(kTypes)) +
                      " relations");
  }
  if (min_hop < 1 || max_hop < min_hop) throw ConfigError("synth needs 1 <= min_hop <= max_hop");
  if (!(branching >= 1.0)) throw ConfigError("synth branching must be at least 1");
  if (answer_multiplicity < 1) throw ConfigError("synth answer multiplicity must be at least 1");
  if (!(confusability >= 0.0 && confusability <= 1.0)) throw ConfigError("synth confusability must lie in [0,1]");
}

SynthDataset generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  GraphBuilder builder;

  // Relation vocabulary: relation i sits in group i % groups; within a group
  // odd slots are peripheral.
  const std::size_t n_groups = (cfg.n_relations + 4) / 5;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t d = 0; d < std::size(kDomains); ++d) {
    for (std::size_t t = 0; t < std::size(kTypes); ++t) pairs.emplace_back(d, t);
  }
  rng.shuffle(std::span(pairs));
  std::vector<std::vector<std::size_t>> core_props(n_groups), peripheral_props(n_groups);
  for (std::size_t gi = 0; gi < n_groups; ++gi) {
    core_props[gi].resize(std::size(kCoreProps));
    peripheral_props[gi].resize(std::size(kPeripheralProps));
    for (std::size_t k = 0; k < core_props[gi].size(); ++k) core_props[gi][k] = k;
    for (std::size_t k = 0; k < peripheral_props[gi].size(); ++k) peripheral_props[gi][k] = k;
    rng.shuffle(std::span(core_props[gi]));
    rng.shuffle(std::span(peripheral_props[gi]));
  }
  std::vector<Relation> relations(cfg.n_relations);
  std::vector<std::size_t> core_ids;
  std::vector<std::vector<std::size_t>> group_peripherals(n_groups);
  for (std::size_t i = 0; i < cfg.n_relations; ++i) {
    Relation& r = relations[i];
    r.group = i % n_groups;
    const std::size_t slot = i / n_groups;
    r.core = slot % 2 == 0;
    const auto [d, t] = pairs[r.group];
    const std::string_view prop =
        r.core ? kCoreProps[core_props[r.group][slot / 2]] : kPeripheralProps[peripheral_props[r.group][slot / 2]];
    r.words = {std::string(kDomains[d]), std::string(kTypes[t]), std::string(prop)};
    r.label = r.words[0] + "." + r.words[1] + "." + r.words[2];
    builder.add_relation(r.label);
    (r.core ? core_ids : group_peripherals[r.group]).push_back(i);
  }

  // Background graph.
  const std::size_t ent_width = std::max<std::size_t>(5, std::to_string(cfg.n_entities).size());
  std::vector<std::string> background(cfg.n_entities);
  for (std::size_t i = 0; i < cfg.n_entities; ++i) {
    background[i] = padded('e', i, ent_width);
    builder.add_entity(background[i]);
  }
  auto random_other = [&](std::size_t self) {
    std::size_t j = rng.uniform_index(cfg.n_entities - 1);
    return j >= self ? j + 1 : j;
  };
  for (std::size_t i = 0; i < cfg.n_entities; ++i) {
    const std::size_t deg = degree(rng, cfg.branching);
    for (std::size_t k = 0; k < deg; ++k) {
      builder.add(background[i], relations[rng.uniform_index(cfg.n_relations)].label, background[random_other(i)]);
    }
  }

  struct Draft {
    Query query;
    std::vector<std::string> chain;      // entity labels e_0 .. e_{h-1}
    std::vector<std::size_t> gold;       // relation indices r_1 .. r_h
    std::vector<std::string> answers;
  };
  const std::size_t q_width = std::max<std::size_t>(5, std::to_string(cfg.n_queries).size());
  std::vector<Draft> drafts(cfg.n_queries);
  for (std::size_t qi = 0; qi < cfg.n_queries; ++qi) {
    Draft& d = drafts[qi];
    const std::string num = padded('q', qi + 1, q_width).substr(1);
    d.query.id = "q" + num;
    const std::size_t hops = cfg.min_hop + rng.uniform_index(cfg.max_hop - cfg.min_hop + 1);
    for (std::size_t h = 0; h < hops; ++h) d.gold.push_back(core_ids[rng.uniform_index(core_ids.size())]);

    d.chain.push_back("t" + num);
    for (std::size_t h = 1; h < hops; ++h) {
      d.chain.push_back(cfg.shared_intermediates ? background[rng.uniform_index(cfg.n_entities)]
                                                 : "m" + num + "." + std::to_string(h));
    }
    for (std::size_t a = 0; a < cfg.answer_multiplicity; ++a) d.answers.push_back("a" + num + "." + std::to_string(a));

    // Each hop gets a decoy: a peripheral relation from the gold relation's
    // group whose distinguishing word also appears in the question, so the
    // decoy and the gold relation look equally relevant on the surface.
    std::vector<std::optional<std::size_t>> decoys;
    for (std::size_t r : d.gold) {
      const auto& peers = group_peripherals[relations[r].group];
      if (peers.empty()) {
        decoys.emplace_back();
      } else {
        decoys.emplace_back(peers[rng.uniform_index(peers.size())]);
      }
    }
    d.query.question = d.chain.front();
    std::set<std::string> question_words;
    for (std::size_t h = 0; h < hops; ++h) {
      for (const std::string& w : relations[d.gold[h]].words) {
        d.query.question += " " + w;
        question_words.insert(w);
      }
      if (decoys[h]) {
        const std::string& w = relations[*decoys[h]].words.back();
        d.query.question += " " + w;
        question_words.insert(w);
      }
    }

    std::vector<std::size_t> disjoint;
    for (std::size_t r = 0; r < cfg.n_relations; ++r) {
      const auto& ws = relations[r].words;
      if (std::none_of(ws.begin(), ws.end(), [&](const std::string& w) { return question_words.count(w) > 0; })) {
        disjoint.push_back(r);
      }
    }

    for (std::size_t h = 0; h < hops; ++h) {
      const std::string& head = d.chain[h];
      const std::size_t gold = d.gold[h];
      if (h + 1 < hops) {
        builder.add(head, relations[gold].label, d.chain[h + 1]);
      } else {
        for (const std::string& a : d.answers) builder.add(head, relations[gold].label, a);
      }
      const std::size_t deg = degree(rng, cfg.branching);
      for (std::size_t k = 0; k < deg; ++k) {
        std::size_t r;
        if (rng.bernoulli(cfg.confusability) && decoys[h]) {
          r = *decoys[h];
        } else if (!disjoint.empty()) {
          r = disjoint[rng.uniform_index(disjoint.size())];
        } else {
          r = rng.uniform_index(cfg.n_relations - 1);
          if (r >= gold) ++r;
        }
        builder.add(head, relations[r].label, background[rng.uniform_index(cfg.n_entities)]);
      }
    }
  }

  SynthDataset ds;
  ds.config = cfg;
  ds.graph = std::move(builder).build();
  for (Draft& d : drafts) {
    Query q = std::move(d.query);
    q.topic_entities = {ds.graph.entity(d.chain.front())};
    for (const std::string& a : d.answers) q.answers.push_back(ds.graph.entity(a));
    normalize(q);
    std::vector<Step> steps;
    for (std::size_t h = 0; h < d.gold.size(); ++h) {
      const std::string& tail = h + 1 < d.gold.size() ? d.chain[h + 1] : d.answers.front();
      steps.push_back({ds.graph.relation(relations[d.gold[h]].label), ds.graph.entity(tail)});
    }
    ds.gold_paths.emplace_back(ds.graph.entity(d.chain.front()), std::move(steps));
    ds.queries.push_back(std::move(q));
  }
  return ds;
}

SynthReport verify(const KnowledgeGraph& g, const std::vector<Query>& queries, const std::vector<Path>& gold_paths,
                   std::size_t max_hop) {
  SynthReport rep;
  std::size_t reachable = 0;
  for (const Query& q : queries) {
    const auto paths = ground_truth_paths(g, q, max_hop, 1);
    if (paths.empty()) continue;
    ++reachable;
    ++rep.depth_histogram[paths.front().hops()];
  }
  rep.reachability = queries.empty() ? 0.0 : static_cast<double>(reachable) / static_cast<double>(queries.size());
  rep.mean_out_degree =
      g.entity_count() == 0 ? 0.0 : static_cast<double>(g.triple_count()) / static_cast<double>(g.entity_count());

  std::size_t distractors = 0, confusable = 0;
  for (const Path& p : gold_paths) {
    EntityId head = p.origin();
    for (const Step& s : p.steps()) {
      const std::string& gold = g.relation_label(s.relation);
      for (const Edge& e : g.neighbors(head)) {
        if (e.relation == s.relation) continue;
        ++distractors;
        if (shares_domain_and_type(g.relation_label(e.relation), gold)) ++confusable;
      }
      head = s.entity;
    }
  }
  rep.confusability_estimate = distractors == 0 ? 0.0 : static_cast<double>(confusable) / distractors;
  rep.ok = !queries.empty() && reachable == queries.size();
  return rep;
}

void write_manifest(std::ostream& out, const SynthDataset& ds, const SynthReport& report) {
  const SynthConfig& c = ds.config;
  nlohmann::ordered_json m;
  m["generator"] = "cpr-synth";
  m["seed"] = c.seed;
  m["config"] = {{"n_entities", c.n_entities},
                 {"n_relations", c.n_relations},
                 {"n_queries", c.n_queries},
                 {"min_hop", c.min_hop},
                 {"max_hop", c.max_hop},
                 {"branching", c.branching},
                 {"answer_multiplicity", c.answer_multiplicity},
                 {"confusability", c.confusability},
                 {"shared_intermediates", c.shared_intermediates},
                 {"seed", c.seed}};
  m["counts"] = {{"entities", ds.graph.entity_count()},
                 {"relations", ds.graph.relation_count()},
                 {"triples", ds.graph.triple_count()},
                 {"queries", ds.queries.size()}};
  nlohmann::ordered_json hist = nlohmann::ordered_json::object();
  for (const auto& [depth, n] : report.depth_histogram) hist[std::to_string(depth)] = n;
  m["verification"] = {{"reachability", report.reachability},
                       {"depth_histogram", hist},
                       {"mean_out_degree", report.mean_out_degree},
                       {"confusability_estimate", report.confusability_estimate},
                       {"ok", report.ok}};
  out << m.dump(2) << '\n';
}

}  // namespace cpr
