#include <doctest.h>

#include <set>
#include <sstream>

#include "cpr/error.hpp"
#include "cpr/pipeline.hpp"
#include "cpr/synth.hpp"
#include "helpers.hpp"

using namespace cpr;

namespace {

SynthConfig small(std::uint64_t seed, double confusability) {
  SynthConfig c;
  c.n_entities = 300;
  c.n_relations = 40;
  c.n_queries = 100;
  c.confusability = confusability;
  c.seed = seed;
  return c;
}

std::string dump(const SynthDataset& ds) {
  std::ostringstream out;
  ds.graph.write_tsv(out);
  write_queries(out, ds.graph, ds.queries);
  write_manifest(out, ds, verify(ds.graph, ds.queries, ds.gold_paths, ds.config.max_hop));
  return out.str();
}

}  // namespace

TEST_CASE("generation is deterministic per seed") {
  CHECK(dump(generate(small(4, 0.3))) == dump(generate(small(4, 0.3))));
  CHECK(dump(generate(small(4, 0.3))) != dump(generate(small(5, 0.3))));
}

TEST_CASE("config validation") {
  SynthConfig c = small(1, 0.3);
  c.branching = 0.5;
  CHECK_THROWS_AS(generate(c), ConfigError);
  c = small(1, 1.5);
  CHECK_THROWS_AS(generate(c), ConfigError);
  c = small(1, 0.3);
  c.min_hop = 3;
  c.max_hop = 2;
  CHECK_THROWS_AS(generate(c), ConfigError);
  c = small(1, 0.3);
  c.answer_multiplicity = 0;
  CHECK_THROWS_AS(generate(c), ConfigError);
}

TEST_CASE("verify on fresh output") {
  const SynthDataset ds = generate(small(2, 0.3));
  const SynthReport r = verify(ds.graph, ds.queries, ds.gold_paths, 2);
  CHECK(r.ok);
  CHECK(r.reachability == 1.0);
  std::size_t total = 0;
  for (const auto& [depth, n] : r.depth_histogram) {
    CHECK(depth >= 1);
    CHECK(depth <= 2);
    total += n;
  }
  CHECK(total == ds.queries.size());
  for (std::size_t i = 0; i < ds.queries.size(); ++i) {
    CHECK(is_valid_path(ds.graph, ds.gold_paths[i]));
    CHECK(ds.queries[i].is_answer(ds.gold_paths[i].terminal()));
    CHECK(ds.gold_paths[i].hops() <= 2);
  }
}

TEST_CASE("deleting an answer edge breaks verification") {
  const SynthDataset ds = generate(small(3, 0.3));
  const Path& gold = ds.gold_paths[0];
  const EntityId parent = gold.hops() == 1 ? gold.origin() : gold.steps()[gold.hops() - 2].entity;
  GraphBuilder b;
  for (std::uint32_t e = 0; e < ds.graph.entity_count(); ++e) b.add_entity(ds.graph.entity_label(EntityId{e}));
  for (const Triple& t : ds.graph.triples()) {
    if (t.head == parent && t.relation == gold.last_relation() && t.tail == gold.terminal()) continue;
    b.add(ds.graph.entity_label(t.head), ds.graph.relation_label(t.relation), ds.graph.entity_label(t.tail));
  }
  const KnowledgeGraph mutated = std::move(b).build();
  std::vector<Query> queries = ds.queries;
  const SynthReport r = verify(mutated, queries, ds.gold_paths, 2);
  CHECK(r.reachability < 1.0);
  CHECK_FALSE(r.ok);
}

TEST_CASE("without confusable distractors the semantic baseline ranks gold last hops first") {
  const SynthDataset ds = generate(small(6, 0.0));
  SemanticIndex index(ds.graph, std::make_shared<HashEmbedder>(64, 9));
  BetaPrior prior(ds.graph.relation_count());
  FeatureExtractor fx(index, prior);
  std::size_t right = 0, total = 0;
  for (const Query& q : ds.queries) {
    const PathPairSet s = collect_pairs(ds.graph, q, 2, PairCaps{}, 1);
    const Embedding& qe = index.text(q.question);
    for (auto [i, j] : s.pairs) {
      ++total;
      right += v_sem(fx.features(qe, s.positives[i])) < v_sem(fx.features(qe, s.negatives[j]));
    }
  }
  REQUIRE(total > 100);
  CHECK(static_cast<double>(right) / static_cast<double>(total) >= 0.99);
}

TEST_CASE("questions carry the gold words and one decoy word per hop") {
  const SynthDataset ds = generate(small(7, 1.0));
  for (std::size_t i = 0; i < ds.queries.size(); ++i) {
    const Query& q = ds.queries[i];
    const Path& gold = ds.gold_paths[i];
    const auto words = tokenize(q.question);
    const std::set<std::string> bag(words.begin(), words.end());
    std::size_t gold_words = 0;
    for (RelationId r : gold.relations()) {
      for (const auto& w : tokenize(ds.graph.relation_label(r))) {
        CHECK(bag.count(w) == 1);
        ++gold_words;
      }
    }
    // topic label tokens + gold words + one decoy per hop
    CHECK(words.size() == tokenize(ds.graph.entity_label(q.topic_entities[0])).size() + gold_words + gold.hops());

    // With confusability 1 every distractor on the chain is the hop's decoy:
    // it shares domain and type with gold and its last word is in the question.
    EntityId head = gold.origin();
    for (const Step& s : gold.steps()) {
      const auto gold_tokens = tokenize(ds.graph.relation_label(s.relation));
      for (const Edge& e : ds.graph.neighbors(head)) {
        if (e.relation == s.relation) continue;
        const auto t = tokenize(ds.graph.relation_label(e.relation));
        CHECK(t[0] == gold_tokens[0]);
        CHECK(t[1] == gold_tokens[1]);
        CHECK(bag.count(t[2]) == 1);
      }
      head = s.entity;
    }
  }
}

TEST_CASE("confusability estimate follows the dial") {
  const SynthDataset lo = generate(small(8, 0.0)), hi = generate(small(8, 0.8));
  const double e_lo = verify(lo.graph, lo.queries, lo.gold_paths, 2).confusability_estimate;
  const double e_hi = verify(hi.graph, hi.queries, hi.gold_paths, 2).confusability_estimate;
  CHECK(e_lo < 0.1);
  CHECK(e_hi > 0.6);
}

TEST_CASE("semantic-baseline APSS does not decrease with confusability") {
  double prev = -1;
  for (double conf : {0.0, 0.5, 1.0}) {
    double total = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      RunConfig cfg;
      cfg.seed = seed;
      cfg.synth = small(0, conf);
      cfg.synth.n_queries = 300;
      cfg.cal_count = 100;
      cfg.test_count = 100;
      cfg.embed_dim = 32;
      cfg.use_rcvnet = false;
      cfg.alphas = {0.5};
      const SynthDataset ds = synthesize(cfg);
      const DatasetSplit split = three_way_split(ds.queries, cfg);
      const ExperimentResult r = run_experiment(ds.graph, split, cfg, NullHintProvider());
      total += r.grid.rows[0].apss;
    }
    CHECK(total / 5 >= prev);
    prev = total / 5;
  }
}
