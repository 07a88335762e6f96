#include "cpr/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "cpr/error.hpp"

namespace cpr {

namespace {

void require_results(std::span<const PredictionResult> results) {
  if (results.empty()) throw MetricError("metrics need at least one prediction");
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string num(double v) { return fmt("%.17g", v); }

}  // namespace

double ecr(std::span<const PredictionResult> results) {
  require_results(results);
  const auto hits = std::count_if(results.begin(), results.end(), [](const PredictionResult& r) { return r.covered; });
  return static_cast<double>(hits) / static_cast<double>(results.size());
}

double apss(std::span<const PredictionResult> results) {
  require_results(results);
  std::size_t total = 0;
  for (const PredictionResult& r : results) total += r.answers.size();
  return static_cast<double>(total) / static_cast<double>(results.size());
}

std::optional<double> coverage_efficiency(double ecr, double apss) {
  if (!(apss > 0.0)) return std::nullopt;
  return ecr / apss;
}

double reachability(std::span<const NonconformityScore> test_scores) {
  if (test_scores.empty()) throw MetricError("reachability needs at least one query");
  const auto n = std::count_if(test_scores.begin(), test_scores.end(),
                               [](const NonconformityScore& s) { return s.finite(); });
  return static_cast<double>(n) / static_cast<double>(test_scores.size());
}

GridResult run_alpha_grid(const std::vector<NonconformityScore>& cal_scores,
                          const std::vector<std::vector<ScoredPath>>& test_pools,
                          const std::vector<Query>& test_queries, std::vector<double> alphas) {
  if (test_pools.size() != test_queries.size()) throw ContractError("test pools and queries are not aligned");
  if (alphas.empty()) throw ConfigError("alpha grid is empty");
  std::sort(alphas.begin(), alphas.end());
  alphas.erase(std::unique(alphas.begin(), alphas.end()), alphas.end());

  std::vector<NonconformityScore> test_scores;
  for (std::size_t i = 0; i < test_queries.size(); ++i) {
    test_scores.push_back(nonconformity(test_queries[i].id, test_pools[i], test_queries[i]));
  }
  const double reach = reachability(test_scores);

  GridResult grid;
  for (double alpha : alphas) {
    const Threshold t = calibrate(cal_scores, alpha);
    std::vector<PredictionResult> preds;
    preds.reserve(test_queries.size());
    for (std::size_t i = 0; i < test_queries.size(); ++i) {
      preds.push_back(predict(test_queries[i].id, test_pools[i], t.tau, &test_queries[i]));
      const auto& score = test_scores[i];
      if (score.finite() && score.value <= t.tau && !preds.back().covered) {
        throw MetricError("query '" + score.query_id + "' has a finite score under the threshold but no correct path");
      }
    }
    MetricsRow row;
    row.alpha = alpha;
    row.ecr = ecr(preds);
    row.apss = apss(preds);
    row.coverage_efficiency = coverage_efficiency(row.ecr, row.apss);
    row.valid = row.ecr >= 1.0 - alpha;
    row.n_test = preds.size();
    row.reachability = reach;
    grid.thresholds.push_back(t);
    grid.rows.push_back(row);
    grid.predictions.push_back(std::move(preds));
  }
  check_nested(grid);
  return grid;
}

void check_nested(const GridResult& grid) {
  for (std::size_t a = 1; a < grid.rows.size(); ++a) {
    if (grid.rows[a].apss > grid.rows[a - 1].apss) {
      throw MetricError("APSS increases from alpha " + num(grid.rows[a - 1].alpha) + " to " + num(grid.rows[a].alpha));
    }
    const auto& wide = grid.predictions[a - 1];
    const auto& narrow = grid.predictions[a];
    for (std::size_t i = 0; i < narrow.size(); ++i) {
      if (!std::includes(wide[i].answers.begin(), wide[i].answers.end(), narrow[i].answers.begin(),
                         narrow[i].answers.end())) {
        throw MetricError("answer sets of query '" + narrow[i].query_id + "' are not nested across alphas");
      }
    }
  }
}

void write_report_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
  std::ostringstream s;
  s << "alpha,ecr,apss,coverage_efficiency,valid,n_test,reachability\n";
  for (const MetricsRow& r : rows) {
    s << num(r.alpha) << ',' << num(r.ecr) << ',' << num(r.apss) << ','
      << (r.coverage_efficiency ? num(*r.coverage_efficiency) : std::string()) << ',' << (r.valid ? 1 : 0) << ','
      << r.n_test << ',' << num(r.reachability) << '\n';
  }
  out << s.str();
}

std::vector<MetricsRow> read_report_csv(std::istream& in) {
  std::vector<MetricsRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 7) throw ParseError("report line " + std::to_string(line_no) + ": expected 7 fields");
    try {
      MetricsRow r;
      r.alpha = std::stod(f[0]);
      r.ecr = std::stod(f[1]);
      r.apss = std::stod(f[2]);
      if (!f[3].empty()) r.coverage_efficiency = std::stod(f[3]);
      r.valid = f[4] == "1";
      r.n_test = std::stoul(f[5]);
      r.reachability = std::stod(f[6]);
      rows.push_back(r);
    } catch (const std::logic_error&) {
      throw ParseError("report line " + std::to_string(line_no) + ": bad number");
    }
  }
  return rows;
}

void write_report_json(std::ostream& out, const std::vector<MetricsRow>& rows, const nlohmann::ordered_json& manifest) {
  nlohmann::ordered_json doc;
  doc["manifest"] = manifest;
  auto arr = nlohmann::ordered_json::array();
  for (const MetricsRow& r : rows) {
    nlohmann::ordered_json o;
    o["alpha"] = r.alpha;
    o["ecr"] = r.ecr;
    o["apss"] = r.apss;
    o["coverage_efficiency"] = r.coverage_efficiency ? nlohmann::ordered_json(*r.coverage_efficiency) : nlohmann::ordered_json(nullptr);
    o["valid"] = r.valid;
    o["n_test"] = r.n_test;
    o["reachability"] = r.reachability;
    arr.push_back(std::move(o));
  }
  doc["rows"] = std::move(arr);
  out << doc.dump(2) << '\n';
}

void write_report_table(std::ostream& out, const std::vector<MetricsRow>& rows) {
  std::ostringstream s;
  char line[160];
  std::snprintf(line, sizeof line, "%-6s %8s %8s %10s %6s %7s\n", "alpha", "ECR(%)", "APSS", "ECR/APSS(%)", "n",
                "reach");
  s << line;
  for (const MetricsRow& r : rows) {
    const std::string e = r.valid ? fmt("%.1f", 100.0 * r.ecr) : "--";
    const std::string a = r.valid ? fmt("%.2f", r.apss) : "--";
    const std::string c = r.valid && r.coverage_efficiency ? fmt("%.2f", 100.0 * *r.coverage_efficiency) : "--";
    std::snprintf(line, sizeof line, "%-6.2f %8s %8s %10s %6zu %7.3f\n", r.alpha, e.c_str(), a.c_str(), c.c_str(),
                  r.n_test, r.reachability);
    s << line;
  }
  out << s.str();
}

void write_predictions_jsonl(std::ostream& out, const KnowledgeGraph& g, const GridResult& grid) {
  for (std::size_t a = 0; a < grid.rows.size(); ++a) {
    const Threshold& t = grid.thresholds[a];
    for (const PredictionResult& r : grid.predictions[a]) {
      nlohmann::ordered_json o;
      o["alpha"] = t.alpha;
      o["query_id"] = r.query_id;
      if (t.tau == kInf) {
        o["tau"] = "inf";
      } else {
        o["tau"] = t.tau;
      }
      auto paths = nlohmann::ordered_json::array();
      for (const ScoredPath& sp : r.paths) {
        paths.push_back({{"path", path_labels(g, sp.path)}, {"v_prime", sp.v_prime}});
      }
      o["paths"] = std::move(paths);
      auto answers = nlohmann::ordered_json::array();
      for (EntityId e : r.answers) answers.push_back(g.entity_label(e));
      o["answers"] = std::move(answers);
      o["covered"] = r.covered;
      out << o.dump() << '\n';
    }
  }
}

}  // namespace cpr
