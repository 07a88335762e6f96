#include "cpr/pipeline.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <sstream>

#include "cpr/error.hpp"
#include "cpr/log.hpp"
#include "cpr/parallel.hpp"

namespace cpr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError("setting '" + key + "' needs a non-negative integer, got '" + v + "'");
  }
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError("setting '" + key + "' needs a non-negative integer, got '" + v + "'");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (v.empty() || used != v.size()) throw ConfigError("setting '" + key + "' needs a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("setting '" + key + "' needs true or false, got '" + v + "'");
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define CPR_SIZE(expr)                                                                                   \
  Field {                                                                                                \
    [](RunConfig& c, const std::string& k, const std::string& v) { c.expr = parse_size(k, v); },        \
        [](const RunConfig& c) { return std::to_string(c.expr); }                                        \
  }
#define CPR_DOUBLE(expr)                                                                                 \
  Field {                                                                                                \
    [](RunConfig& c, const std::string& k, const std::string& v) { c.expr = parse_double(k, v); },      \
        [](const RunConfig& c) { return fmt_double(c.expr); }                                            \
  }
#define CPR_STRING(expr)                                                                                 \
  Field {                                                                                                \
    [](RunConfig& c, const std::string&, const std::string& v) { c.expr = v; },                          \
        [](const RunConfig& c) { return c.expr; }                                                        \
  }

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"seed", {[](RunConfig& c, const std::string& k, const std::string& v) { c.seed = parse_u64(k, v); },
                [](const RunConfig& c) { return std::to_string(c.seed); }}},
      {"out", CPR_STRING(out_dir)},
      {"workers", CPR_SIZE(workers)},
      {"graph", CPR_STRING(graph_file)},
      {"train", CPR_STRING(train_file)},
      {"cal", CPR_STRING(cal_file)},
      {"test", CPR_STRING(test_file)},
      {"params", CPR_STRING(params_file)},
      {"embed_dim", CPR_SIZE(embed_dim)},
      {"embeddings", CPR_STRING(embeddings_file)},
      {"hints", CPR_STRING(hint_provider)},
      {"hint_file", CPR_STRING(hint_file)},
      {"synth.n_entities", CPR_SIZE(synth.n_entities)},
      {"synth.n_relations", CPR_SIZE(synth.n_relations)},
      {"synth.n_queries", CPR_SIZE(synth.n_queries)},
      {"synth.min_hop", CPR_SIZE(synth.min_hop)},
      {"synth.max_hop", CPR_SIZE(synth.max_hop)},
      {"synth.branching", CPR_DOUBLE(synth.branching)},
      {"synth.answer_multiplicity", CPR_SIZE(synth.answer_multiplicity)},
      {"synth.confusability", CPR_DOUBLE(synth.confusability)},
      {"synth.shared_intermediates",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.synth.shared_intermediates = parse_bool(k, v);
        },
        [](const RunConfig& c) { return std::string(c.synth.shared_intermediates ? "true" : "false"); }}},
      {"split.cal", CPR_SIZE(cal_count)},
      {"split.test", CPR_SIZE(test_count)},
      {"puct.c", CPR_DOUBLE(rollout.c_puct)},
      {"puct.rollouts", CPR_SIZE(rollout.rollouts_per_query)},
      {"puct.max_hop", CPR_SIZE(rollout.max_hop)},
      {"pairs.max_positives", CPR_SIZE(caps.max_positives)},
      {"pairs.neg_per_pos", CPR_SIZE(caps.neg_per_pos)},
      {"pairs.ground_truth_cap", CPR_SIZE(caps.ground_truth_cap)},
      {"train.lr", CPR_DOUBLE(train.learning_rate)},
      {"train.batch", CPR_SIZE(train.batch_size)},
      {"train.epochs", CPR_SIZE(train.epochs)},
      {"net.width", CPR_SIZE(width)},
      {"scorer",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          if (v != "rcvnet" && v != "semantic") throw ConfigError("setting '" + k + "' must be rcvnet or semantic");
          c.use_rcvnet = v == "rcvnet";
        },
        [](const RunConfig& c) { return std::string(c.use_rcvnet ? "rcvnet" : "semantic"); }}},
      {"treeg.branch_out", CPR_SIZE(treeg.branch_out)},
      {"treeg.active_set", CPR_SIZE(treeg.active_set)},
      {"treeg.max_hop", CPR_SIZE(treeg.max_hop)},
      {"treeg.hint_weight", CPR_DOUBLE(treeg.hint_weight)},
      {"alphas",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          std::vector<double> out;
          std::stringstream ss(v);
          std::string item;
          while (std::getline(ss, item, ',')) {
            const double a = parse_double(k, trim(item));
            if (!(a > 0.0 && a < 1.0)) throw ConfigError("alpha values must lie in (0,1), got '" + item + "'");
            out.push_back(a);
          }
          if (out.empty()) throw ConfigError("setting '" + k + "' needs at least one value");
          c.alphas = std::move(out);
        },
        [](const RunConfig& c) {
          std::string s;
          for (double a : c.alphas) s += (s.empty() ? "" : ",") + fmt_double(a);
          return s;
        }}},
  };
  return table;
}

#undef CPR_SIZE
#undef CPR_DOUBLE
#undef CPR_STRING

std::string in_dir(const RunConfig& cfg, const std::string& override_path, const std::string& name) {
  return override_path.empty() ? (std::filesystem::path(cfg.out_dir) / name).string() : override_path;
}

std::string out_path(const RunConfig& cfg, const std::string& name) {
  return (std::filesystem::path(cfg.out_dir) / name).string();
}

std::ifstream open_input(const std::string& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + what + " '" + path + "'", true);
  return in;
}

template <class Fn>
void write_output(const RunConfig& cfg, const std::string& name, Fn&& fn) {
  std::filesystem::create_directories(cfg.out_dir);
  std::ostringstream buf;
  fn(buf);
  const std::string path = out_path(cfg, name);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << buf.str();
  if (!out) throw IoError("failed writing '" + path + "'");
}

std::vector<Query> load_split(const RunConfig& cfg, const KnowledgeGraph& g, const std::string& split) {
  const std::string& override_path = split == "train" ? cfg.train_file : split == "cal" ? cfg.cal_file : cfg.test_file;
  auto qs = load_queries_file(in_dir(cfg, override_path, split + ".jsonl"), g);
  sort_by_id(qs);
  return qs;
}

BetaPrior load_prior(const RunConfig& cfg, const KnowledgeGraph& g) {
  auto in = open_input(out_path(cfg, "priors.tsv"), "relation priors");
  return BetaPrior::read_tsv(in, g);
}

std::vector<QueryPool> load_pools(const RunConfig& cfg, const KnowledgeGraph& g, const std::string& split) {
  auto in = open_input(out_path(cfg, "pools_" + split + ".jsonl"), "retrieval pools");
  return read_pools_jsonl(in, g);
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const auto& [name, field] : fields()) {
    if (name == key) {
      field.set(*this, key, trim(value));
      return;
    }
  }
  throw ConfigError("unknown setting '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> RunConfig::items() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [name, field] : fields()) out.emplace_back(name, field.get(*this));
  return out;
}

std::string RunConfig::fingerprint() const {
  std::string canon;
  for (const auto& [k, v] : items()) {
    if (k == "out" || k == "workers") continue;  // neither changes any result
    canon += k + " = " + v + "\n";
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canon)));
  return buf;
}

void load_config(std::istream& in, RunConfig& cfg) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

void load_config_file(const std::string& path, RunConfig& cfg) {
  auto in = open_input(path, "config file");
  load_config(in, cfg);
}

std::shared_ptr<const EmbeddingProvider> make_embedder(const RunConfig& cfg) {
  const std::uint64_t seed = derive_seed(cfg.seed, stream::kEmbed);
  if (!cfg.embeddings_file.empty()) {
    std::shared_ptr<const EmbeddingProvider> table = TableEmbedder::load(cfg.embeddings_file, seed);
    return table;
  }
  return std::make_shared<HashEmbedder>(cfg.embed_dim, seed);
}

std::unique_ptr<HintProvider> make_hint_provider(const RunConfig& cfg) {
  if (cfg.hint_provider == "none") return std::make_unique<NullHintProvider>();
  if (cfg.hint_provider == "file") {
    if (cfg.hint_file.empty()) throw ConfigError("hint provider 'file' needs hint_file");
    return FixedHintProvider::load(cfg.hint_file);
  }
  if (cfg.hint_provider == "cache") {
    if (cfg.hint_file.empty()) throw ConfigError("hint provider 'cache' needs hint_file");
    return HintCache::load(cfg.hint_file);
  }
  if (cfg.hint_provider == "http") return std::make_unique<HttpHintProvider>(HttpHintConfig::from_env());
  throw ConfigError("unknown hint provider '" + cfg.hint_provider + "' (none, file, cache, http)");
}

SynthDataset synthesize(const RunConfig& cfg) {
  SynthConfig sc = cfg.synth;
  sc.seed = derive_seed(cfg.seed, stream::kSynth);
  return generate(sc);
}

DatasetSplit three_way_split(const std::vector<Query>& queries, const RunConfig& cfg) {
  const std::uint64_t seed = derive_seed(cfg.seed, stream::kSplit);
  DatasetSplit first = split_dataset(queries, CalibrationSize::of_count(cfg.test_count), seed);
  DatasetSplit second = split_dataset(first.train, CalibrationSize::of_count(cfg.cal_count), derive_seed(seed, 1));
  DatasetSplit out{std::move(second.train), std::move(second.calibration), std::move(first.calibration)};
  sort_by_id(out.train);
  sort_by_id(out.calibration);
  sort_by_id(out.test);
  return out;
}

CollectionResult collect(const SemanticIndex& index, const std::vector<Query>& train, const RunConfig& cfg) {
  return run_collection(index, train, cfg.rollout, cfg.caps, derive_seed(cfg.seed, stream::kCollect), cfg.workers);
}

TrainResult train_value_net(const SemanticIndex& index, const BetaPrior& prior, const std::vector<Query>& train,
                            const std::vector<PathPairSet>& pairs, const RunConfig& cfg) {
  const FeatureExtractor fx(index, prior);
  const PairDataset data = build_pair_dataset(fx, train, pairs);
  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.seed, stream::kTrain);
  return cpr::train(data, RcvnetShape{index.dimension(), cfg.width}, tc);
}

std::vector<QueryPool> retrieve_all(const SemanticIndex& index, const BetaPrior& prior, const RcvnetParams* params,
                                    const std::vector<Query>& queries, const HintProvider& hints,
                                    const RunConfig& cfg) {
  cfg.treeg.validate();
  const FeatureExtractor fx(index, prior);
  std::vector<QueryPool> pools(queries.size());
  parallel_for(queries.size(), cfg.workers, [&](std::size_t i) {
    const Query& q = queries[i];
    QueryPool& qp = pools[i];
    qp.query_id = q.id;
    qp.hints = generate_hints(hints, q.id, q.question, cfg.treeg.max_hop);
    qp.paths = retrieve(fx, q, params, qp.hints, cfg.treeg);
  });
  return pools;
}

std::vector<std::vector<ScoredPath>> pool_paths(const std::vector<QueryPool>& pools, const std::vector<Query>& queries) {
  std::map<std::string, const QueryPool*> by_id;
  for (const QueryPool& p : pools) by_id[p.query_id] = &p;
  std::vector<std::vector<ScoredPath>> out;
  out.reserve(queries.size());
  for (const Query& q : queries) {
    auto it = by_id.find(q.id);
    if (it == by_id.end()) throw LoadError("no retrieval pool for query '" + q.id + "'");
    out.push_back(it->second->paths);
  }
  return out;
}

std::vector<NonconformityScore> score_pools(const std::vector<QueryPool>& pools, const std::vector<Query>& queries) {
  const auto paths = pool_paths(pools, queries);
  std::vector<NonconformityScore> out;
  out.reserve(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) out.push_back(nonconformity(queries[i].id, paths[i], queries[i]));
  return out;
}

ExperimentResult run_experiment(const KnowledgeGraph& g, const DatasetSplit& split, const RunConfig& cfg,
                                const HintProvider& hints) {
  const SemanticIndex index(g, make_embedder(cfg));
  ExperimentResult r;
  CollectionResult c = collect(index, split.train, cfg);
  r.prior = std::move(c.prior);
  r.pairs = std::move(c.pairs);
  const RcvnetParams* params = nullptr;
  if (cfg.use_rcvnet) {
    r.trained = train_value_net(index, r.prior, split.train, r.pairs, cfg);
    params = &r.trained->params;
  }
  r.cal_pools = retrieve_all(index, r.prior, params, split.calibration, hints, cfg);
  r.test_pools = retrieve_all(index, r.prior, params, split.test, hints, cfg);
  r.cal_scores = score_pools(r.cal_pools, split.calibration);
  r.grid = run_alpha_grid(r.cal_scores, pool_paths(r.test_pools, split.test), split.test, cfg.alphas);
  return r;
}

void phase_synth(const RunConfig& cfg) {
  const SynthDataset ds = synthesize(cfg);
  const SynthReport report = verify(ds.graph, ds.queries, ds.gold_paths, ds.config.max_hop);
  if (!report.ok) throw Error(ErrorCategory::Runtime, "synthetic dataset failed verification");
  const DatasetSplit split = three_way_split(ds.queries, cfg);
  write_output(cfg, "graph.tsv", [&](std::ostream& o) { ds.graph.write_tsv(o); });
  write_output(cfg, "train.jsonl", [&](std::ostream& o) { write_queries(o, ds.graph, split.train); });
  write_output(cfg, "cal.jsonl", [&](std::ostream& o) { write_queries(o, ds.graph, split.calibration); });
  write_output(cfg, "test.jsonl", [&](std::ostream& o) { write_queries(o, ds.graph, split.test); });
  write_output(cfg, "manifest.json", [&](std::ostream& o) { write_manifest(o, ds, report); });
}

void phase_collect(const RunConfig& cfg) {
  const KnowledgeGraph g = load_graph_file(in_dir(cfg, cfg.graph_file, "graph.tsv"));
  const auto train = load_split(cfg, g, "train");
  if (train.empty()) throw ConfigError("training query file is empty");
  const SemanticIndex index(g, make_embedder(cfg));
  const CollectionResult c = collect(index, train, cfg);
  write_output(cfg, "priors.tsv", [&](std::ostream& o) { c.prior.write_tsv(o, g); });
  write_output(cfg, "pairs.jsonl", [&](std::ostream& o) { write_pairs_jsonl(o, g, c.pairs); });
}

void phase_train(const RunConfig& cfg) {
  const KnowledgeGraph g = load_graph_file(in_dir(cfg, cfg.graph_file, "graph.tsv"));
  const auto train = load_split(cfg, g, "train");
  const BetaPrior prior = load_prior(cfg, g);
  auto pairs_in = open_input(out_path(cfg, "pairs.jsonl"), "training pairs");
  const auto pairs = read_pairs_jsonl(pairs_in, g);
  const SemanticIndex index(g, make_embedder(cfg));
  const TrainResult r = train_value_net(index, prior, train, pairs, cfg);
  write_output(cfg, "params.txt", [&](std::ostream& o) { save_params(o, r.params); });
  write_output(cfg, "train_log.csv", [&](std::ostream& o) { write_train_log_csv(o, r.log); });
}

void phase_retrieve(const RunConfig& cfg, const std::string& split) {
  if (split != "cal" && split != "test") throw ConfigError("retrieve split must be 'cal' or 'test'");
  const KnowledgeGraph g = load_graph_file(in_dir(cfg, cfg.graph_file, "graph.tsv"));
  const auto queries = load_split(cfg, g, split);
  const BetaPrior prior = load_prior(cfg, g);
  const SemanticIndex index(g, make_embedder(cfg));
  std::optional<RcvnetParams> params;
  if (cfg.use_rcvnet) params = load_params_file(in_dir(cfg, cfg.params_file, "params.txt"), index.dimension());
  const auto hints = make_hint_provider(cfg);
  const auto pools = retrieve_all(index, prior, params ? &*params : nullptr, queries, *hints, cfg);
  write_output(cfg, "pools_" + split + ".jsonl", [&](std::ostream& o) { write_pools_jsonl(o, g, pools); });
}

void phase_calibrate(const RunConfig& cfg) {
  const KnowledgeGraph g = load_graph_file(in_dir(cfg, cfg.graph_file, "graph.tsv"));
  const auto queries = load_split(cfg, g, "cal");
  if (queries.empty()) throw CalibrationError("calibration query file is empty");
  const auto scores = score_pools(load_pools(cfg, g, "cal"), queries);
  std::vector<Threshold> thresholds;
  auto alphas = cfg.alphas;
  std::sort(alphas.begin(), alphas.end());
  for (double a : alphas) thresholds.push_back(calibrate(scores, a));
  write_output(cfg, "calibration.csv", [&](std::ostream& o) { write_calibration_csv(o, scores); });
  write_output(cfg, "thresholds.json", [&](std::ostream& o) { write_thresholds_json(o, thresholds); });
}

std::vector<MetricsRow> phase_evaluate(const RunConfig& cfg) {
  const KnowledgeGraph g = load_graph_file(in_dir(cfg, cfg.graph_file, "graph.tsv"));
  const auto queries = load_split(cfg, g, "test");
  if (queries.empty()) throw ConfigError("test query file is empty");
  auto cal_in = open_input(out_path(cfg, "calibration.csv"), "calibration scores");
  const auto cal_scores = read_calibration_csv(cal_in);
  if (cal_scores.empty()) throw CalibrationError("calibration score file is empty");
  const auto pools = load_pools(cfg, g, "test");
  const GridResult grid = run_alpha_grid(cal_scores, pool_paths(pools, queries), queries, cfg.alphas);

  nlohmann::ordered_json manifest;
  manifest["seed"] = cfg.seed;
  manifest["config_hash"] = cfg.fingerprint();
  manifest["scorer"] = cfg.use_rcvnet ? "rcvnet" : "semantic";
  manifest["n_cal"] = cal_scores.size();
  manifest["n_test"] = queries.size();
  manifest["reachability"] = grid.rows.front().reachability;

  write_output(cfg, "predictions.jsonl", [&](std::ostream& o) { write_predictions_jsonl(o, g, grid); });
  write_output(cfg, "report.csv", [&](std::ostream& o) { write_report_csv(o, grid.rows); });
  write_output(cfg, "report.json", [&](std::ostream& o) { write_report_json(o, grid.rows, manifest); });
  write_output(cfg, "report.txt", [&](std::ostream& o) { write_report_table(o, grid.rows); });
  return grid.rows;
}

std::vector<MetricsRow> phase_e2e(const RunConfig& cfg) {
  if (cfg.graph_file.empty()) phase_synth(cfg);
  phase_collect(cfg);
  if (cfg.use_rcvnet) phase_train(cfg);
  phase_retrieve(cfg, "cal");
  phase_retrieve(cfg, "test");
  phase_calibrate(cfg);
  return phase_evaluate(cfg);
}

}  // namespace cpr
