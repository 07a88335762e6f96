#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <memory>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <thread>

#include "cpr/error.hpp"
#include "cpr/hints.hpp"
#include "cpr/treeg.hpp"
#include "helpers.hpp"

// After Eigen: <resolv.h> defines a _res macro that clashes with Eigen names.
#include <httplib.h>

using namespace cpr;
using testutil::graph_of;
using testutil::query_of;

TEST_CASE("parse_hint_json") {
  CHECK(parse_hint_json(R"({"chains":[["a.b.c"]]})") == HintChains{{"a.b.c"}});
  CHECK(parse_hint_json(R"({"chains":[]})").empty());
  testutil::WarningCapture warnings;
  const auto five = parse_hint_json(R"({"chains":[["r1"],["r2"],["r3"],["r4"],["r5"]]})");
  CHECK(five == HintChains{{"r1"}, {"r2"}, {"r3"}, {"r4"}});
  CHECK(warnings.messages.size() == 1);
  CHECK_THROWS_AS(parse_hint_json("{\"chains\": "), ParseError);
  CHECK_THROWS_AS(parse_hint_json(R"({"chains":[[1]]})"), ParseError);
  CHECK_THROWS_AS(parse_hint_json(R"({"other":[]})"), ParseError);
}

TEST_CASE("flatten_hints deduplicates and sorts") {
  const HintChains example = {{"people.person.place_of_birth"},
                              {"location.location.contains", "people.person.nationality"}};
  CHECK(flatten_hints(example) == HintSet{"location.location.contains", "people.person.nationality",
                                          "people.person.place_of_birth"});
  CHECK(flatten_hints({{"b", "a"}, {"a"}}) == HintSet{"a", "b"});
}

namespace {

class ThrowingProvider final : public HintProvider {
 public:
  HintChains chains(const std::string&, std::size_t) const override { throw ParseError("bad reply"); }
};

}  // namespace

TEST_CASE("generate_hints degrades to the empty set") {
  testutil::WarningCapture warnings;
  CHECK(generate_hints(ThrowingProvider(), "q", 2).empty());
  CHECK(warnings.messages.size() == 1);
  CHECK(generate_hints(NullHintProvider(), "q", 2).empty());
}

TEST_CASE("file and cache providers") {
  const auto dir = testutil::scratch_dir("hints");
  testutil::write_file(dir / "fixed.json", R"({"chains":[["x.y.z"],["a.b.c","x.y.z"]]})");
  const auto fixed = FixedHintProvider::load((dir / "fixed.json").string());
  CHECK(generate_hints(*fixed, "anything", 2) == HintSet{"a.b.c", "x.y.z"});

  std::vector<HintCacheEntry> entries = {{"q1", "who directed it", {{"film.film.director"}}},
                                         {"q2", "where was she born", {{"people.person.place_of_birth"}}}};
  std::ostringstream out;
  write_hint_cache(out, entries);
  testutil::write_file(dir / "cache.jsonl", out.str());
  const auto cache = HintCache::load((dir / "cache.jsonl").string());
  CHECK(cache->chains("where was she born", 2) == HintChains{{"people.person.place_of_birth"}});
  CHECK(cache->chains("unknown", 2).empty());
  // id wins over question text; unknown id falls back to the question
  CHECK(cache->chains_for("q1", "where was she born", 2) == HintChains{{"film.film.director"}});
  CHECK(cache->chains_for("q9", "where was she born", 2) == HintChains{{"people.person.place_of_birth"}});
  CHECK(generate_hints(*cache, "q1", "", 2) == HintSet{"film.film.director"});
}

TEST_CASE("HTTP provider sends the one-shot prompt at temperature 0") {
  httplib::Server server;
  nlohmann::json received;
  std::string reply_content;
  std::string auth;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    received = nlohmann::json::parse(req.body);
    auth = req.get_header_value("Authorization");
    nlohmann::json reply = {{"choices", {{{"message", {{"role", "assistant"}, {"content", reply_content}}}}}}};
    res.set_content(reply.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread worker([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpHintConfig cfg;
  cfg.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
  cfg.api_key = "secret";
  cfg.model = "test-model";
  HttpHintProvider provider(cfg);

  const std::string expected_prompt =
      "You are helping a Freebase-style KGQA system.\n"
      "Given a question, propose up to 4 likely relation chains (1 to 2 hops).\n"
      "Relations must be in dot-separated format like \"common.topic.image\".\n"
      "Output STRICT JSON ONLY in this exact format:\n"
      "{\"chains\":[[\"relation1\"],[\"relationA\",\"relationB\"]]}\n"
      "Example of correct output:\n"
      "{\"chains\":[[\"people.person.place_of_birth\"], "
      "[\"location.location.contains\",\"people.person.nationality\"]]}\n"
      "Question: what is the nationality of the person born in Ulm\n"
      "JSON:";

  SUBCASE("well-formed reply") {
    reply_content =
        "```json\n{\"chains\":[[\"people.person.place_of_birth\"], "
        "[\"location.location.contains\",\"people.person.nationality\"]]}\n```";
    const HintSet hints = generate_hints(provider, "what is the nationality of the person born in Ulm", 2);
    CHECK(hints == HintSet{"location.location.contains", "people.person.nationality",
                           "people.person.place_of_birth"});
    CHECK(received.at("temperature") == 0);
    CHECK(received.at("model") == "test-model");
    REQUIRE(received.at("messages").size() == 1);
    CHECK(received.at("messages")[0].at("content").get<std::string>() == expected_prompt);
    CHECK(auth == "Bearer secret");
  }
  SUBCASE("malformed reply") {
    reply_content = "I think the answer is people.person.nationality";
    testutil::WarningCapture warnings;
    CHECK(generate_hints(provider, "q", 2).empty());
    CHECK(warnings.messages.size() == 1);
  }
  server.stop();
  worker.join();

  HttpHintConfig dead = cfg;
  dead.base_url = "http://127.0.0.1:1/v1";
  dead.timeout = std::chrono::seconds(2);
  testutil::WarningCapture warnings;
  CHECK(generate_hints(HttpHintProvider(dead), "q", 2).empty());
}

TEST_CASE("hint_bonus and score_hinted") {
  const KnowledgeGraph g = graph_of({{"a", "film.film.director", "b"}, {"b", "people.person.spouse", "c"}});
  SemanticIndex index(g, std::make_shared<HashEmbedder>(16, 3));
  const Path one(g.entity("a"), {{g.relation("film.film.director"), g.entity("b")}});
  const Path two = one.with_step(g.relation("people.person.spouse"), g.entity("c"));
  CHECK(hint_bonus(index, two, {}) == 0.0);
  CHECK(hint_bonus(index, one, {"film.film.director"}) == doctest::Approx(1.0));

  const HintSet hints = {"people.person.nationality", "film.film.producer"};
  double oracle = 0;
  for (const std::string rel : {"film.film.director", "people.person.spouse"}) {
    double best = -1e300;
    for (const auto& h : hints) best = std::max(best, similarity(hash_embed(rel, 16, 3), hash_embed(h, 16, 3)));
    oracle += best;
  }
  CHECK(hint_bonus(index, two, hints) == doctest::Approx(oracle).epsilon(1e-12));

  CHECK(score_hinted(0.7, 2.0, 0.0) == 0.7);
  CHECK(score_hinted(0.2, 1.5, 0.1) == doctest::Approx(0.05));
  CHECK(score_hinted(-0.3, 0.0, 0.4) == -0.3);
  CHECK_THROWS_AS(score_hinted(0.2, 1.0, -0.1), ConfigError);
}

TEST_CASE("TreeGConfig validation") {
  TreeGConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.branch_out = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.hint_weight = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("retrieve") {
  const KnowledgeGraph g = graph_of({{"t", "film.film.director", "d"},
                                     {"t", "music.album.genre", "x"},
                                     {"d", "people.person.spouse", "s"},
                                     {"d", "common.topic.image", "i"},
                                     {"x", "music.album.producer", "p"}});
  SemanticIndex index(g, std::make_shared<HashEmbedder>(32, 5));
  BetaPrior prior(g.relation_count());
  FeatureExtractor fx(index, prior);

  SUBCASE("large budgets return every path up to H hops") {
    const Query q = query_of(g, "q", "t film director people person spouse", {"t"}, {"s"});
    TreeGConfig cfg;
    const auto pool = retrieve(fx, q, nullptr, {}, cfg);
    std::set<std::vector<std::string>> got;
    for (const ScoredPath& sp : pool) got.insert(path_labels(g, sp.path));
    const std::set<std::vector<std::string>> all = {
        {"t", "film.film.director", "d"},
        {"t", "music.album.genre", "x"},
        {"t", "film.film.director", "d", "people.person.spouse", "s"},
        {"t", "film.film.director", "d", "common.topic.image", "i"},
        {"t", "music.album.genre", "x", "music.album.producer", "p"}};
    CHECK(got == all);
    CHECK(pool.size() == all.size());
  }
  SUBCASE("B = A = 1 follows the greedy chain") {
    const Query q = query_of(g, "q", "film director spouse", {"t"}, {"s"});
    TreeGConfig cfg;
    cfg.branch_out = cfg.active_set = 1;
    const auto pool = retrieve(fx, q, nullptr, {}, cfg);
    REQUIRE(pool.size() == 2);
    CHECK(path_labels(g, pool[0].path) == std::vector<std::string>{"t", "film.film.director", "d"});
    CHECK(path_labels(g, pool[1].path) ==
          std::vector<std::string>{"t", "film.film.director", "d", "people.person.spouse", "s"});
    for (const ScoredPath& sp : pool) CHECK(sp.v_prime == sp.v);
  }
  SUBCASE("hints lower v' by the weighted bonus") {
    const Query q = query_of(g, "q", "film director spouse", {"t"}, {"s"});
    TreeGConfig cfg;
    const HintSet hints = {"music.album.genre"};
    for (const ScoredPath& sp : retrieve(fx, q, nullptr, hints, cfg)) {
      CHECK(sp.hint_bonus == doctest::Approx(hint_bonus(index, sp.path, hints)));
      CHECK(sp.v_prime == doctest::Approx(sp.v - cfg.hint_weight * sp.hint_bonus));
    }
  }
  SUBCASE("dead-end topic") {
    const Query q = query_of(g, "q", "x", {"s"}, {"t"});
    CHECK(retrieve(fx, q, nullptr, {}, TreeGConfig{}).empty());
  }
  SUBCASE("pools round-trip through JSON Lines") {
    const Query q = query_of(g, "q", "t film director", {"t"}, {"s"});
    std::vector<QueryPool> pools = {{"q", {"film.film.director"}, retrieve(fx, q, nullptr, {"film.film.director"}, {})}};
    std::ostringstream out;
    write_pools_jsonl(out, g, pools);
    std::istringstream in(out.str());
    const auto back = read_pools_jsonl(in, g);
    REQUIRE(back.size() == 1);
    CHECK(back[0].hints == pools[0].hints);
    REQUIRE(back[0].paths.size() == pools[0].paths.size());
    for (std::size_t i = 0; i < back[0].paths.size(); ++i) {
      CHECK(back[0].paths[i].path == pools[0].paths[i].path);
      CHECK(back[0].paths[i].v_prime == pools[0].paths[i].v_prime);
    }
  }
}
