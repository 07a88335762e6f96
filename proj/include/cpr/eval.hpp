#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpr/conformal.hpp"

namespace cpr {

struct MetricsRow {
  double alpha = 0.0;
  double ecr = 0.0;
  double apss = 0.0;
  std::optional<double> coverage_efficiency;  // empty when apss = 0
  bool valid = false;                          // ecr >= 1 - alpha
  std::size_t n_test = 0;
  double reachability = 0.0;
  bool operator==(const MetricsRow&) const = default;
};

/// Fraction of results whose answer set meets the gold answers. Throws
/// MetricError for an empty list.
double ecr(std::span<const PredictionResult> results);
/// Mean number of distinct answers.
double apss(std::span<const PredictionResult> results);
std::optional<double> coverage_efficiency(double ecr, double apss);

/// Fraction of queries with a retrieved path ending in an answer.
double reachability(std::span<const NonconformityScore> test_scores);

inline const std::vector<double>& default_alphas() {
  static const std::vector<double> a = {0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
  return a;
}

struct GridResult {
  std::vector<Threshold> thresholds;
  std::vector<MetricsRow> rows;
  std::vector<std::vector<PredictionResult>> predictions;  // per alpha, aligned with the test queries
};

/// One row per alpha (sorted ascending), each recalibrated from the same
/// calibration scores. Throws MetricError when answer sets are not nested
/// across alphas.
GridResult run_alpha_grid(const std::vector<NonconformityScore>& cal_scores,
                          const std::vector<std::vector<ScoredPath>>& test_pools,
                          const std::vector<Query>& test_queries, std::vector<double> alphas);

/// Throws MetricError unless every query's answers at a larger alpha are a
/// subset of those at the smaller one and APSS does not increase.
void check_nested(const GridResult& grid);

/// alpha,ecr,apss,coverage_efficiency,valid,n_test,reachability
void write_report_csv(std::ostream& out, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_report_csv(std::istream& in);
/// {"manifest": ..., "rows": [...]}; raw numbers kept for invalid rows.
void write_report_json(std::ostream& out, const std::vector<MetricsRow>& rows, const nlohmann::ordered_json& manifest);
/// Fixed-width table in percent; metrics of invalid rows shown as "--".
void write_report_table(std::ostream& out, const std::vector<MetricsRow>& rows);

/// One JSON object per (alpha, query) with paths, scores, answers and the
/// covered flag.
void write_predictions_jsonl(std::ostream& out, const KnowledgeGraph& g, const GridResult& grid);

}  // namespace cpr
