#pragma once

// The three phases (collect + train, calibrate, retrieve + evaluate) plus
// dataset generation, both as in-memory functions and as file-to-file steps
// that persist every intermediate artifact in the output directory.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cpr/conformal.hpp"
#include "cpr/eval.hpp"
#include "cpr/hints.hpp"
#include "cpr/puct.hpp"
#include "cpr/rcvnet.hpp"
#include "cpr/synth.hpp"
#include "cpr/treeg.hpp"

namespace cpr {

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "cpr_out";
  std::size_t workers = 1;

  // Inputs; empty means the file of that name in out_dir.
  std::string graph_file;
  std::string train_file;
  std::string cal_file;
  std::string test_file;
  std::string params_file;

  std::size_t embed_dim = 64;
  std::string embeddings_file;  // optional text -> vector table

  std::string hint_provider = "none";  // none | file | cache | http
  std::string hint_file;

  SynthConfig synth;
  std::size_t cal_count = 500;
  std::size_t test_count = 500;

  RolloutConfig rollout;
  PairCaps caps;
  TrainConfig train;
  std::size_t width = 256;
  bool use_rcvnet = true;  // false scores with the semantic baseline

  TreeGConfig treeg;
  std::vector<double> alphas = default_alphas();

  /// Throws ConfigError for an unknown key or an unparsable value.
  void set(const std::string& key, const std::string& value);
  /// Canonical "key = value" lines, one per setting, in a fixed order.
  std::vector<std::pair<std::string, std::string>> items() const;
  /// FNV-1a of the canonical items except out and workers, hex.
  std::string fingerprint() const;
};

/// `key = value` lines; blank lines and '#' comments are ignored.
void load_config(std::istream& in, RunConfig& cfg);
void load_config_file(const std::string& path, RunConfig& cfg);

/// Seed streams of the master seed, one per phase.
namespace stream {
inline constexpr std::uint64_t kSynth = 1;
inline constexpr std::uint64_t kSplit = 2;
inline constexpr std::uint64_t kEmbed = 3;
inline constexpr std::uint64_t kCollect = 4;
inline constexpr std::uint64_t kTrain = 5;
}  // namespace stream

std::shared_ptr<const EmbeddingProvider> make_embedder(const RunConfig& cfg);
std::unique_ptr<HintProvider> make_hint_provider(const RunConfig& cfg);

/// Generates the synthetic dataset for cfg.synth with the derived seed.
SynthDataset synthesize(const RunConfig& cfg);
/// Seeded three-way split: cal_count calibration and test_count test
/// queries, the rest train. Each part is ordered by id.
DatasetSplit three_way_split(const std::vector<Query>& queries, const RunConfig& cfg);

CollectionResult collect(const SemanticIndex& index, const std::vector<Query>& train, const RunConfig& cfg);
TrainResult train_value_net(const SemanticIndex& index, const BetaPrior& prior, const std::vector<Query>& train,
                            const std::vector<PathPairSet>& pairs, const RunConfig& cfg);
/// Pools aligned with `queries`. Parallel over queries; the result does not
/// depend on the worker count.
std::vector<QueryPool> retrieve_all(const SemanticIndex& index, const BetaPrior& prior, const RcvnetParams* params,
                                    const std::vector<Query>& queries, const HintProvider& hints,
                                    const RunConfig& cfg);
/// Scores aligned with `queries`. Throws LoadError when a pool is missing.
std::vector<NonconformityScore> score_pools(const std::vector<QueryPool>& pools, const std::vector<Query>& queries);
std::vector<std::vector<ScoredPath>> pool_paths(const std::vector<QueryPool>& pools, const std::vector<Query>& queries);

struct ExperimentResult {
  BetaPrior prior;
  std::vector<PathPairSet> pairs;
  std::optional<TrainResult> trained;
  std::vector<QueryPool> cal_pools;
  std::vector<QueryPool> test_pools;
  std::vector<NonconformityScore> cal_scores;
  GridResult grid;
};

/// All phases in memory.
ExperimentResult run_experiment(const KnowledgeGraph& g, const DatasetSplit& split, const RunConfig& cfg,
                                const HintProvider& hints);

// File-to-file phases. Each reads its inputs from the configured paths and
// writes into cfg.out_dir.
void phase_synth(const RunConfig& cfg);
void phase_collect(const RunConfig& cfg);
void phase_train(const RunConfig& cfg);
void phase_retrieve(const RunConfig& cfg, const std::string& split);  // "cal" or "test"
void phase_calibrate(const RunConfig& cfg);
/// Returns the metrics rows it wrote.
std::vector<MetricsRow> phase_evaluate(const RunConfig& cfg);
std::vector<MetricsRow> phase_e2e(const RunConfig& cfg);

}  // namespace cpr
