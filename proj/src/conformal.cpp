#include "cpr/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <nlohmann/json.hpp>
#include <ostream>
#include <set>
#include <sstream>

#include "cpr/error.hpp"
#include "cpr/parallel.hpp"

namespace cpr {

namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0,1), got " + std::to_string(alpha));
}

std::string format_score(double v) {
  if (v == kInf) return "inf";
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

double parse_score(const std::string& text) {
  if (text == "inf") return kInf;
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || text.empty()) throw ParseError("not a score: '" + text + "'");
  return v;
}

std::vector<EntityId> unique_terminals(std::span<const ScoredPath> paths) {
  std::vector<EntityId> out;
  out.reserve(paths.size());
  for (const ScoredPath& sp : paths) out.push_back(sp.path.terminal());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

bool any_answer(const std::vector<EntityId>& entities, const Query& q) {
  return std::any_of(entities.begin(), entities.end(), [&](EntityId e) { return q.is_answer(e); });
}

// Hop-level bookkeeping for one query: which pool paths can still lead to an
// answer, and which paths survived each hop so far.
struct HopState {
  const std::vector<ScoredPath>* pool = nullptr;
  const Query* query = nullptr;
  std::set<Path> correct;  // every prefix of a pool path that ends in an answer
  std::set<Path> survivors;
  std::vector<ScoredPath> kept;
  bool alive = true;

  HopState(const std::vector<ScoredPath>& p, const Query& q) : pool(&p), query(&q) {
    for (const ScoredPath& sp : p) {
      if (!q.is_answer(sp.path.terminal())) continue;
      for (std::size_t n = 1; n <= sp.path.hops(); ++n) correct.insert(sp.path.prefix(n));
    }
  }

  std::vector<const ScoredPath*> candidates(std::size_t hop) const {
    std::vector<const ScoredPath*> out;
    for (const ScoredPath& sp : *pool) {
      if (sp.path.hops() != hop) continue;
      if (hop > 1 && !survivors.count(sp.path.prefix(hop - 1))) continue;
      out.push_back(&sp);
    }
    return out;
  }

  double score(std::size_t hop) const {
    double best = kInf;
    for (const ScoredPath* sp : candidates(hop)) {
      if (correct.count(sp->path)) best = std::min(best, sp->v_prime);
    }
    return best;
  }

  void advance(std::size_t hop, double tau) {
    const double s = score(hop);
    std::set<Path> next;
    for (const ScoredPath* sp : candidates(hop)) {
      if (sp->v_prime <= tau) {
        next.insert(sp->path);
        kept.push_back(*sp);
      }
    }
    survivors = std::move(next);
    alive = alive && s <= tau;
  }
};

}  // namespace

NonconformityScore nonconformity(const std::string& query_id, std::span<const ScoredPath> pool, const Query& q) {
  NonconformityScore s{query_id, kInf};
  for (const ScoredPath& sp : pool) {
    if (q.is_answer(sp.path.terminal())) s.value = std::min(s.value, sp.v_prime);
  }
  return s;
}

std::size_t conformal_rank(std::size_t n, double alpha) {
  check_alpha(alpha);
  const double x = static_cast<double>(n + 1) * (1.0 - alpha);
  const double k = std::ceil(x - 1e-9 * std::max(1.0, x));
  return std::max<std::size_t>(1, static_cast<std::size_t>(k));
}

Threshold calibrate(std::vector<NonconformityScore> scores, double alpha) {
  check_alpha(alpha);
  if (scores.empty()) throw CalibrationError("calibration set is empty");
  std::stable_sort(scores.begin(), scores.end(), [](const NonconformityScore& a, const NonconformityScore& b) {
    if (a.value != b.value) return a.value < b.value;
    return a.query_id < b.query_id;
  });
  Threshold t;
  t.alpha = alpha;
  t.n_cal = scores.size();
  t.k = conformal_rank(t.n_cal, alpha);
  t.tau = t.k <= t.n_cal ? scores[t.k - 1].value : kInf;
  return t;
}

double conformal_quantile(std::vector<double> values, double alpha) {
  if (values.empty()) throw CalibrationError("calibration set is empty");
  const std::size_t k = conformal_rank(values.size(), alpha);
  if (k > values.size()) return kInf;
  auto nth = values.begin() + static_cast<std::ptrdiff_t>(k - 1);
  std::nth_element(values.begin(), nth, values.end());
  return *nth;
}

PredictionResult predict(const std::string& query_id, std::span<const ScoredPath> pool, double tau, const Query* q) {
  PredictionResult r;
  r.query_id = query_id;
  for (const ScoredPath& sp : pool) {
    if (sp.v_prime <= tau) r.paths.push_back(sp);
  }
  r.answers = unique_terminals(r.paths);
  r.covered = q != nullptr && any_answer(r.answers, *q);
  return r;
}

double coverage_trial(const ScoreSampler& sampler, std::size_t n_cal, double alpha, std::size_t trials,
                      std::uint64_t seed, std::size_t workers) {
  check_alpha(alpha);
  if (trials == 0 || n_cal == 0) throw ConfigError("coverage trial needs at least one trial and one score");
  std::vector<char> hit(trials, 0);
  parallel_for(trials, workers, [&](std::size_t t) {
    Rng rng(derive_seed(seed, t));
    std::vector<double> cal(n_cal);
    for (double& v : cal) v = sampler(rng);
    const double fresh = sampler(rng);
    hit[t] = fresh <= conformal_quantile(std::move(cal), alpha) ? 1 : 0;
  });
  const auto hits = std::count(hit.begin(), hit.end(), 1);
  return static_cast<double>(hits) / static_cast<double>(trials);
}

HopLevelResult hop_level_calibrate_baseline(const std::vector<std::vector<ScoredPath>>& cal_pools,
                                            const std::vector<Query>& cal_queries,
                                            const std::vector<std::vector<ScoredPath>>& test_pools,
                                            const std::vector<Query>& test_queries,
                                            std::span<const double> alphas_per_hop) {
  if (cal_pools.size() != cal_queries.size() || test_pools.size() != test_queries.size()) {
    throw ContractError("hop-level baseline: pools and queries are not aligned");
  }
  if (alphas_per_hop.empty()) throw ConfigError("hop-level baseline needs one alpha per hop");
  if (cal_queries.empty()) throw CalibrationError("calibration set is empty");

  std::vector<HopState> cal;
  for (std::size_t i = 0; i < cal_pools.size(); ++i) cal.emplace_back(cal_pools[i], cal_queries[i]);

  HopLevelResult out;
  for (std::size_t hop = 1; hop <= alphas_per_hop.size(); ++hop) {
    std::vector<double> scores;
    for (const HopState& s : cal) {
      if (s.alive) scores.push_back(s.score(hop));
    }
    const double tau = scores.empty() ? kInf : conformal_quantile(std::move(scores), alphas_per_hop[hop - 1]);
    out.taus.push_back(tau);
    for (HopState& s : cal) s.advance(hop, tau);
  }

  for (std::size_t i = 0; i < test_pools.size(); ++i) {
    HopState s(test_pools[i], test_queries[i]);
    for (std::size_t hop = 1; hop <= out.taus.size(); ++hop) s.advance(hop, out.taus[hop - 1]);
    PredictionResult r;
    r.query_id = test_queries[i].id;
    r.paths = std::move(s.kept);
    r.answers = unique_terminals(r.paths);
    r.covered = any_answer(r.answers, test_queries[i]);
    out.predictions.push_back(std::move(r));
  }
  return out;
}

void write_calibration_csv(std::ostream& out, const std::vector<NonconformityScore>& scores) {
  std::ostringstream s;
  s << "query_id,score,finite\n";
  for (const NonconformityScore& sc : scores) {
    s << sc.query_id << ',' << format_score(sc.value) << ',' << (sc.finite() ? 1 : 0) << '\n';
  }
  out << s.str();
}

std::vector<NonconformityScore> read_calibration_csv(std::istream& in) {
  std::vector<NonconformityScore> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("query_id,", 0) == 0) continue;
    const std::size_t a = line.find(',');
    const std::size_t b = a == std::string::npos ? a : line.find(',', a + 1);
    if (b == std::string::npos) throw ParseError("calibration line " + std::to_string(line_no) + ": expected 3 fields");
    NonconformityScore sc;
    sc.query_id = line.substr(0, a);
    sc.value = parse_score(line.substr(a + 1, b - a - 1));
    out.push_back(std::move(sc));
  }
  return out;
}

void write_thresholds_json(std::ostream& out, const std::vector<Threshold>& thresholds) {
  auto arr = nlohmann::ordered_json::array();
  for (const Threshold& t : thresholds) {
    nlohmann::ordered_json obj;
    obj["alpha"] = t.alpha;
    obj["k"] = t.k;
    obj["n_cal"] = t.n_cal;
    if (t.tau == kInf) {
      obj["tau"] = "inf";
    } else {
      obj["tau"] = t.tau;
    }
    arr.push_back(std::move(obj));
  }
  out << arr.dump(2) << '\n';
}

std::vector<Threshold> read_thresholds_json(std::istream& in) {
  std::vector<Threshold> out;
  try {
    const auto arr = nlohmann::json::parse(in);
    for (const auto& obj : arr) {
      Threshold t;
      t.alpha = obj.at("alpha").get<double>();
      t.k = obj.at("k").get<std::size_t>();
      t.n_cal = obj.at("n_cal").get<std::size_t>();
      const auto& tau = obj.at("tau");
      t.tau = tau.is_string() ? parse_score(tau.get<std::string>()) : tau.get<double>();
      out.push_back(t);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("threshold file: ") + e.what());
  }
  return out;
}

}  // namespace cpr
