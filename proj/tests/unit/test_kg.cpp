#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "cpr/error.hpp"
#include "cpr/graph.hpp"
#include "cpr/path.hpp"
#include "cpr/query.hpp"
#include "helpers.hpp"

using namespace cpr;
using testutil::graph_of;
using testutil::query_of;

TEST_CASE("load_graph reads distinct lines and deduplicates repeats") {
  std::istringstream three("a\tr1\tb\nb\tr2\tc\na\tr2\tc\n");
  CHECK(load_graph(three).triple_count() == 3);
  std::istringstream twice("a\tr1\tb\na\tr1\tb\n");
  CHECK(load_graph(twice).triple_count() == 1);
}

TEST_CASE("load_graph rejects malformed and empty input") {
  std::istringstream bad("a\tr1\n");
  CHECK_THROWS_AS(load_graph(bad), LoadError);
  std::istringstream empty("\n\n");
  CHECK_THROWS_AS(load_graph(empty), LoadError);
  CHECK_THROWS_AS(load_graph_file("/nonexistent/graph.tsv"), IoError);
}

TEST_CASE("write_tsv round-trips") {
  Rng rng(3);
  const KnowledgeGraph g = testutil::random_graph(rng, 40, 5, 200);
  std::ostringstream out;
  g.write_tsv(out);
  std::istringstream in(out.str());
  const KnowledgeGraph h = load_graph(in);
  REQUIRE(h.triple_count() == g.triple_count());
  auto labelled = [](const KnowledgeGraph& k) {
    std::set<std::vector<std::string>> s;
    for (const Triple& t : k.triples()) {
      s.insert({k.entity_label(t.head), k.relation_label(t.relation), k.entity_label(t.tail)});
    }
    return s;
  };
  CHECK(labelled(h) == labelled(g));
}

TEST_CASE("adjacency group sizes match per-head triple counts on 10k random triples") {
  Rng rng(11);
  const KnowledgeGraph g = testutil::random_graph(rng, 500, 20, 10000);
  std::map<std::uint32_t, std::size_t> per_head;
  for (const Triple& t : g.triples()) ++per_head[t.head.value];
  for (std::uint32_t e = 0; e < g.entity_count(); ++e) {
    const auto it = per_head.find(e);
    CHECK(g.neighbors(EntityId{e}).size() == (it == per_head.end() ? 0 : it->second));
  }
}

TEST_CASE("neighbors") {
  const KnowledgeGraph g = graph_of({{"a", "r2", "c"}, {"a", "r1", "b"}});
  const EntityId a = g.entity("a");
  SUBCASE("leaf entity has no edges") { CHECK(g.neighbors(g.entity("b")).empty()); }
  SUBCASE("edges are sorted") {
    const auto n = g.neighbors(a);
    REQUIRE(n.size() == 2);
    CHECK(std::is_sorted(n.begin(), n.end()));
    CHECK(n[0].tail == g.entity(g.relation_label(n[0].relation) == "r1" ? "b" : "c"));
  }
  SUBCASE("unknown entity") { CHECK_THROWS_AS(g.neighbors(EntityId{99}), LookupError); }
}

TEST_CASE("neighbors match a full scan on a random graph") {
  Rng rng(5);
  const KnowledgeGraph g = testutil::random_graph(rng, 60, 6, 400);
  for (std::uint32_t e = 0; e < g.entity_count(); ++e) {
    std::vector<Edge> scan;
    for (const Triple& t : g.triples()) {
      if (t.head.value == e) scan.push_back({t.relation, t.tail});
    }
    std::sort(scan.begin(), scan.end());
    const auto n = g.neighbors(EntityId{e});
    CHECK(std::vector<Edge>(n.begin(), n.end()) == scan);
  }
}

TEST_CASE("available_relations") {
  const KnowledgeGraph g = graph_of({{"a", "r1", "b"}, {"a", "r1", "c"}, {"a", "r2", "d"}});
  const auto rels = available_relations(g, Path(g.entity("a")));
  CHECK(rels == std::vector<RelationId>{g.relation("r1"), g.relation("r2")});
  CHECK(available_relations(g, Path(g.entity("d"))).empty());

  Rng rng(8);
  const KnowledgeGraph r = testutil::random_graph(rng, 50, 8, 300);
  for (std::uint32_t e = 0; e < r.entity_count(); ++e) {
    std::set<RelationId> projected;
    for (const Edge& edge : r.neighbors(EntityId{e})) projected.insert(edge.relation);
    const auto got = available_relations(r, Path(EntityId{e}));
    CHECK(got == std::vector<RelationId>(projected.begin(), projected.end()));
  }
}

TEST_CASE("extend and terminal") {
  const KnowledgeGraph g =
      graph_of({{"a", "r1", "b"}, {"b", "r2", "c"}, {"c", "r3", "d"}});
  const Path a(g.entity("a"));
  CHECK(terminal(a) == g.entity("a"));
  const Path ab = extend(g, a, g.relation("r1"), g.entity("b"), 3);
  CHECK(terminal(ab) == g.entity("b"));
  CHECK(ab.hops() == 1);

  const Path abcd = extend(g, extend(g, ab, g.relation("r2"), g.entity("c"), 3), g.relation("r3"), g.entity("d"), 3);
  const Path manual(g.entity("a"), {{g.relation("r1"), g.entity("b")},
                                     {g.relation("r2"), g.entity("c")},
                                     {g.relation("r3"), g.entity("d")}});
  CHECK(abcd == manual);
  CHECK(terminal(abcd) == g.entity("d"));
  CHECK(is_valid_path(g, abcd));
  CHECK(path_labels(g, abcd) == std::vector<std::string>{"a", "r1", "b", "r2", "c", "r3", "d"});
  CHECK(path_from_labels(g, path_labels(g, abcd)) == abcd);

  CHECK_THROWS_AS(extend(g, ab, g.relation("r2"), g.entity("c"), 1), BudgetError);
  CHECK_THROWS_AS(extend(g, a, g.relation("r2"), g.entity("c"), 3), ContractError);
}

TEST_CASE("ground_truth_paths") {
  SUBCASE("chain") {
    const KnowledgeGraph g = graph_of({{"a", "r1", "b"}, {"b", "r2", "c"}});
    const Query q = query_of(g, "q", "", {"a"}, {"c"});
    const auto paths = ground_truth_paths(g, q, 2, 64);
    REQUIRE(paths.size() == 1);
    CHECK(path_labels(g, paths[0]) == std::vector<std::string>{"a", "r1", "b", "r2", "c"});
    CHECK(ground_truth_paths(g, q, 1, 64).empty());
  }
  SUBCASE("diamond yields both routes in a fixed order") {
    const KnowledgeGraph g = graph_of({{"a", "r1", "b"}, {"a", "r2", "c"}, {"b", "r3", "d"}, {"c", "r4", "d"}});
    const Query q = query_of(g, "q", "", {"a"}, {"d"});
    const auto paths = ground_truth_paths(g, q, 2, 64);
    REQUIRE(paths.size() == 2);
    CHECK(paths[0] < paths[1]);
    std::set<std::vector<std::string>> got;
    for (const Path& p : paths) got.insert(path_labels(g, p));
    CHECK(got == std::set<std::vector<std::string>>{{"a", "r1", "b", "r3", "d"}, {"a", "r2", "c", "r4", "d"}});
    CHECK(ground_truth_paths(g, q, 2, 64) == paths);
  }
}

TEST_CASE("split_dataset") {
  std::vector<Query> qs(10);
  for (int i = 0; i < 10; ++i) qs[i].id = "q" + std::to_string(i);
  const auto s = split_dataset(qs, CalibrationSize::of_fraction(0.1), 4);
  CHECK(s.calibration.size() == 1);
  CHECK(s.train.size() == 9);
  const auto again = split_dataset(qs, CalibrationSize::of_fraction(0.1), 4);
  CHECK(again.calibration[0].id == s.calibration[0].id);
  CHECK_THROWS_AS(split_dataset(qs, CalibrationSize::of_fraction(1.5), 4), ConfigError);
  CHECK_THROWS_AS(split_dataset(qs, CalibrationSize::of_count(10), 4), ConfigError);
}

TEST_CASE("queries round-trip through JSON Lines and drop unknown labels") {
  const KnowledgeGraph g = graph_of({{"a", "r1", "b"}});
  std::istringstream in(
      R"({"id":"q1","question":"where is a","topic_entities":["a","zzz"],"answers":["b"]})"
      "\n");
  testutil::WarningCapture warnings;
  const auto qs = load_queries(in, g);
  REQUIRE(qs.size() == 1);
  CHECK(qs[0].topic_entities == std::vector<EntityId>{g.entity("a")});
  CHECK_FALSE(warnings.messages.empty());
  std::ostringstream out;
  write_queries(out, g, qs);
  std::istringstream back(out.str());
  const auto again = load_queries(back, g);
  CHECK(again[0].answers == qs[0].answers);
  CHECK(again[0].question == "where is a");
}
