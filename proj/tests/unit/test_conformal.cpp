#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cpr/conformal.hpp"
#include "cpr/error.hpp"
#include "helpers.hpp"

using namespace cpr;
using testutil::graph_of;
using testutil::query_of;

namespace {

ScoredPath scored(const Path& p, double v) { return {p, v, 0.0, v}; }

std::vector<NonconformityScore> scores_of(const std::vector<double>& values) {
  std::vector<NonconformityScore> out;
  for (std::size_t i = 0; i < values.size(); ++i) out.push_back({"q" + std::to_string(i), values[i]});
  return out;
}

}  // namespace

TEST_CASE("nonconformity") {
  const KnowledgeGraph g = graph_of({{"a", "r", "y"}, {"a", "s", "n"}, {"a", "t", "y2"}, {"a", "u", "y3"}});
  const Query q = query_of(g, "q", "", {"a"}, {"y", "y2", "y3"});
  auto one = [&](const char* rel, const char* tail) {
    return Path(g.entity("a"), {{g.relation(rel), g.entity(tail)}});
  };
  const std::vector<ScoredPath> none = {scored(one("s", "n"), -1.0)};
  CHECK(nonconformity("q", none, q).value == kInf);
  CHECK(nonconformity("q", {}, q).value == kInf);
  const std::vector<ScoredPath> single = {scored(one("r", "y"), -0.42), scored(one("s", "n"), -2.0)};
  CHECK(nonconformity("q", single, q).value == -0.42);
  const std::vector<ScoredPath> three = {scored(one("r", "y"), 0.1), scored(one("t", "y2"), -0.3),
                                         scored(one("u", "y3"), 0.5)};
  CHECK(nonconformity("q", three, q).value == -0.3);
}

TEST_CASE("conformal_rank and calibrate") {
  CHECK(conformal_rank(9, 0.5) == 5);
  CHECK(conformal_rank(4, 0.1) == 5);
  CHECK(conformal_rank(9, 0.3) == 7);  // 10 * 0.7 is 7.000000000000001 in floating point

  const Threshold nine = calibrate(scores_of({9, 3, 1, 7, 5, 2, 8, 4, 6}), 0.5);
  CHECK(nine.k == 5);
  CHECK(nine.tau == 5);
  CHECK(nine.n_cal == 9);
  CHECK(calibrate(scores_of({1, 2, 3, 4}), 0.1).tau == kInf);
  CHECK(calibrate(scores_of({0.3, 0.3, 0.3, 0.3, 0.3}), 0.5).tau == 0.3);
  CHECK(calibrate(scores_of({1, kInf, kInf, 2}), 0.3).tau == kInf);
  CHECK(calibrate(scores_of({1, kInf, kInf, 2}), 0.7).tau == 2);
  CHECK_THROWS_AS(calibrate({}, 0.5), CalibrationError);
  CHECK_THROWS_AS(calibrate(scores_of({1}), 1.0), ConfigError);
  CHECK_THROWS_AS(calibrate(scores_of({1}), 0.0), ConfigError);
  CHECK(conformal_quantile({9, 3, 1, 7, 5, 2, 8, 4, 6}, 0.5) == 5);
}

TEST_CASE("predict") {
  const KnowledgeGraph g = graph_of({{"a", "r", "y"}, {"a", "s", "n"}, {"a", "t", "m"}});
  const Query q = query_of(g, "q", "", {"a"}, {"y"});
  auto one = [&](const char* rel, const char* tail) {
    return Path(g.entity("a"), {{g.relation(rel), g.entity(tail)}});
  };
  const std::vector<ScoredPath> pool = {scored(one("s", "n"), -0.5), scored(one("r", "y"), 0.1),
                                        scored(one("t", "m"), 0.7)};
  const auto all = predict("q", pool, kInf, &q);
  CHECK(all.paths.size() == 3);
  CHECK(all.covered);
  const auto none = predict("q", pool, -1.0, &q);
  CHECK(none.paths.empty());
  CHECK_FALSE(none.covered);
  const auto two = predict("q", pool, 0.1, &q);
  REQUIRE(two.paths.size() == 2);
  CHECK(two.paths[0].path == pool[0].path);
  CHECK(two.paths[1].path == pool[1].path);
  std::vector<EntityId> expected = {g.entity("y"), g.entity("n")};
  std::sort(expected.begin(), expected.end());
  CHECK(two.answers == expected);
  CHECK(two.covered);
}

TEST_CASE("coverage_trial") {
  const ScoreSampler normal = [](Rng& rng) { return rng.normal(); };
  const double sigma = std::sqrt(0.3 * 0.7 / 10000);
  const double rate = coverage_trial(normal, 100, 0.3, 10000, 42, 2);
  CHECK(rate >= 0.7 - 3 * sigma);
  CHECK(rate <= 0.7 + 1.0 / 101 + 3 * sigma);
  CHECK(coverage_trial(normal, 4, 0.1, 500, 1) == 1.0);
  const ScoreSampler point = [](Rng&) { return 0.25; };
  CHECK(coverage_trial(point, 50, 0.5, 500, 1) == 1.0);
  CHECK(coverage_trial(normal, 100, 0.3, 2000, 9, 1) == coverage_trial(normal, 100, 0.3, 2000, 9, 4));
}

namespace {

// Two queries over the same toy graph: topic a, answers through b.
struct HopFixture {
  KnowledgeGraph g = graph_of({{"a", "r1", "b"}, {"a", "r2", "c"}, {"b", "r3", "y"}, {"c", "r4", "z"},
                               {"a", "r5", "y1"}, {"a", "r6", "n1"}});
  Path p(std::vector<std::pair<const char*, const char*>> steps) const {
    std::vector<Step> s;
    for (auto [r, e] : steps) s.push_back({g.relation(r), g.entity(e)});
    return Path(g.entity("a"), s);
  }
};

}  // namespace

TEST_CASE("hop-level baseline reduces to path-level calibration on 1-hop queries") {
  HopFixture f;
  Rng rng(3);
  std::vector<std::vector<ScoredPath>> cal_pools, test_pools;
  std::vector<Query> cal_q, test_q;
  for (int i = 0; i < 40; ++i) {
    const bool answer_first = rng.bernoulli(0.5);
    const double va = rng.normal(), vn = rng.normal();
    std::vector<ScoredPath> pool = {scored(f.p({{"r5", "y1"}}), va), scored(f.p({{"r6", "n1"}}), vn)};
    Query q = query_of(f.g, "q" + std::to_string(i), "", {"a"}, {answer_first ? "y1" : "n1"});
    (i < 20 ? cal_pools : test_pools).push_back(pool);
    (i < 20 ? cal_q : test_q).push_back(q);
  }
  for (double alpha : {0.2, 0.5}) {
    const std::vector<double> alphas = {alpha};
    const HopLevelResult hop = hop_level_calibrate_baseline(cal_pools, cal_q, test_pools, test_q, alphas);
    std::vector<NonconformityScore> cal;
    for (std::size_t i = 0; i < cal_q.size(); ++i) cal.push_back(nonconformity(cal_q[i].id, cal_pools[i], cal_q[i]));
    const double tau = calibrate(cal, alpha).tau;
    REQUIRE(hop.taus.size() == 1);
    CHECK(hop.taus[0] == tau);
    for (std::size_t i = 0; i < test_q.size(); ++i) {
      const auto pred = predict(test_q[i].id, test_pools[i], tau, &test_q[i]);
      CHECK(hop.predictions[i].answers == pred.answers);
      CHECK(hop.predictions[i].covered == pred.covered);
    }
  }
}

TEST_CASE("hop-level baseline: survivors only, and keep-all pruning keeps coverage") {
  HopFixture f;
  // Hop-1 gold prefix a-r1-b often scores worse than the distractor a-r2-c.
  Rng rng(8);
  std::vector<std::vector<ScoredPath>> pools;
  std::vector<Query> qs;
  for (int i = 0; i < 200; ++i) {
    const double gold1 = rng.normal() + 0.5, other1 = rng.normal();
    const double gold2 = rng.normal(), other2 = rng.normal() + 0.5;
    pools.push_back({scored(f.p({{"r1", "b"}}), gold1), scored(f.p({{"r2", "c"}}), other1),
                     scored(f.p({{"r1", "b"}, {"r3", "y"}}), gold2), scored(f.p({{"r2", "c"}, {"r4", "z"}}), other2)});
    qs.push_back(query_of(f.g, "q" + std::to_string(i), "", {"a"}, {"y"}));
  }
  const std::vector<std::vector<ScoredPath>> cal(pools.begin(), pools.begin() + 100), test(pools.begin() + 100, pools.end());
  const std::vector<Query> cq(qs.begin(), qs.begin() + 100), tq(qs.begin() + 100, qs.end());

  auto coverage = [&](const HopLevelResult& r) {
    double c = 0;
    for (const auto& p : r.predictions) c += p.covered;
    return c / static_cast<double>(r.predictions.size());
  };
  const std::vector<double> aggressive = {0.3, 0.3};
  const HopLevelResult pruned = hop_level_calibrate_baseline(cal, cq, test, tq, aggressive);
  REQUIRE(pruned.taus.size() == 2);
  for (std::size_t i = 0; i < tq.size(); ++i) {
    // Every kept 2-hop path extends a kept 1-hop path.
    for (const ScoredPath& sp : pruned.predictions[i].paths) {
      if (sp.path.hops() != 2) continue;
      const Path parent = sp.path.prefix(1);
      const bool parent_kept = std::any_of(pruned.predictions[i].paths.begin(), pruned.predictions[i].paths.end(),
                                           [&](const ScoredPath& o) { return o.path == parent; });
      CHECK(parent_kept);
    }
  }
  CHECK(coverage(pruned) < 0.7);

  const std::vector<double> keep_all = {1e-9, 1e-9};
  const HopLevelResult full = hop_level_calibrate_baseline(cal, cq, test, tq, keep_all);
  CHECK(coverage(full) == 1.0);
}

TEST_CASE("calibration CSV and thresholds JSON round-trip") {
  const auto scores = scores_of({0.25, kInf, -1.5});
  std::ostringstream csv;
  write_calibration_csv(csv, scores);
  CHECK(csv.str() == "query_id,score,finite\nq0,0.25,1\nq1,inf,0\nq2,-1.5,1\n");
  std::istringstream in(csv.str());
  const auto back = read_calibration_csv(in);
  REQUIRE(back.size() == 3);
  CHECK(back[1].value == kInf);
  CHECK(back[2].value == -1.5);

  const std::vector<Threshold> ts = {{0.3, 4, 4, 0.5}, {0.1, 4, 5, kInf}};
  std::ostringstream js;
  write_thresholds_json(js, ts);
  CHECK(js.str().find("\"inf\"") != std::string::npos);
  std::istringstream jin(js.str());
  const auto tb = read_thresholds_json(jin);
  REQUIRE(tb.size() == 2);
  CHECK(tb[0].tau == 0.5);
  CHECK(tb[1].tau == kInf);
  CHECK(tb[1].k == 5);
}
