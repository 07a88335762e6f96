#pragma once

// Split conformal calibration over per-query path scores. A query's score is
// the best (lowest) hinted cost among its retrieved paths that end in a
// correct answer, or +inf when retrieval missed every answer.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "cpr/query.hpp"
#include "cpr/rng.hpp"
#include "cpr/treeg.hpp"

namespace cpr {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct NonconformityScore {
  std::string query_id;
  double value = kInf;
  bool finite() const { return value != kInf; }
};

struct Threshold {
  double alpha = 0.0;
  std::size_t n_cal = 0;
  std::size_t k = 0;
  double tau = kInf;
};

struct PredictionResult {
  std::string query_id;
  std::vector<ScoredPath> paths;
  std::vector<EntityId> answers;  // sorted unique terminals
  bool covered = false;
};

NonconformityScore nonconformity(const std::string& query_id, std::span<const ScoredPath> pool, const Query& q);

/// ceil((n+1)(1-alpha)); a relative slack of 1e-9 absorbs rounding in the
/// product so exact integers are not pushed up by one.
std::size_t conformal_rank(std::size_t n, double alpha);

/// k-th smallest score, +inf when k > n. Throws CalibrationError for an empty
/// set and ConfigError for alpha outside (0,1).
Threshold calibrate(std::vector<NonconformityScore> scores, double alpha);

/// Same threshold from raw values, without the bookkeeping.
double conformal_quantile(std::vector<double> values, double alpha);

/// Every path with v' <= tau (all of them when tau = +inf). `q` supplies the
/// answers for the covered flag.
PredictionResult predict(const std::string& query_id, std::span<const ScoredPath> pool, double tau,
                         const Query* q = nullptr);

using ScoreSampler = std::function<double(Rng&)>;

/// Fraction of trials where a fresh score falls at or below the threshold
/// calibrated on n_cal other draws. Trial t uses seed stream t.
double coverage_trial(const ScoreSampler& sampler, std::size_t n_cal, double alpha, std::size_t trials,
                      std::uint64_t seed, std::size_t workers = 1);

/// Contrast condition: one threshold per hop, each calibrated only on the
/// calibration queries whose correct route survived the previous hop, with
/// hop-k candidates restricted to extensions of hop-(k-1) survivors. Pools
/// must be aligned with their queries.
struct HopLevelResult {
  std::vector<double> taus;
  std::vector<PredictionResult> predictions;
};

HopLevelResult hop_level_calibrate_baseline(const std::vector<std::vector<ScoredPath>>& cal_pools,
                                            const std::vector<Query>& cal_queries,
                                            const std::vector<std::vector<ScoredPath>>& test_pools,
                                            const std::vector<Query>& test_queries,
                                            std::span<const double> alphas_per_hop);

/// query_id,score,finite
void write_calibration_csv(std::ostream& out, const std::vector<NonconformityScore>& scores);
std::vector<NonconformityScore> read_calibration_csv(std::istream& in);

/// [{"alpha", "k", "n_cal", "tau"}], tau written as "inf" when infinite.
void write_thresholds_json(std::ostream& out, const std::vector<Threshold>& thresholds);
std::vector<Threshold> read_thresholds_json(std::istream& in);

}  // namespace cpr
