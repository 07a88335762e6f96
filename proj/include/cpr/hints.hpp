#pragma once

// Relation hints for retrieval. A provider proposes relation chains for a
// question; retrieval only sees the flattened, deduplicated label set.

#include <chrono>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace cpr {

using HintChains = std::vector<std::vector<std::string>>;
/// Sorted, unique relation labels.
using HintSet = std::vector<std::string>;

inline constexpr std::size_t kMaxHintChains = 4;

/// Parses {"chains": [[...], ...]}. Keeps the first four chains and warns
/// about the rest. Throws ParseError for anything else.
HintChains parse_hint_json(std::string_view text);

HintSet flatten_hints(const HintChains& chains);

class HintProvider {
 public:
  virtual ~HintProvider() = default;
  /// May throw; generate_hints turns failures into an empty set.
  virtual HintChains chains(const std::string& question, std::size_t max_hop) const = 0;
  /// Same, for a known query. Providers that key on the query id override it.
  virtual HintChains chains_for(const std::string& query_id, const std::string& question, std::size_t max_hop) const {
    (void)query_id;
    return chains(question, max_hop);
  }
};

/// Provider output flattened. Any failure yields an empty set and a warning.
HintSet generate_hints(const HintProvider& provider, const std::string& question, std::size_t max_hop);
HintSet generate_hints(const HintProvider& provider, const std::string& query_id, const std::string& question,
                       std::size_t max_hop);

class NullHintProvider final : public HintProvider {
 public:
  HintChains chains(const std::string&, std::size_t) const override { return {}; }
};

/// Same chains for every question.
class FixedHintProvider final : public HintProvider {
 public:
  explicit FixedHintProvider(HintChains chains) : chains_(std::move(chains)) {}
  /// Reads a file holding one {"chains": ...} object.
  static std::unique_ptr<FixedHintProvider> load(const std::string& path);

  HintChains chains(const std::string&, std::size_t) const override { return chains_; }

 private:
  HintChains chains_;
};

struct HintCacheEntry {
  std::string query_id;
  std::string question;
  HintChains chains;
};

/// Precomputed hints, JSON Lines of {"query_id", "question", "chains"}.
/// Keyed by query id; without an id, lookup falls back to the question text.
/// Unknown queries get no hints.
class HintCache final : public HintProvider {
 public:
  explicit HintCache(std::vector<HintCacheEntry> entries);
  static std::unique_ptr<HintCache> load(const std::string& path);

  HintChains chains(const std::string& question, std::size_t max_hop) const override;
  HintChains chains_for(const std::string& query_id, const std::string& question,
                        std::size_t max_hop) const override;
  const std::vector<HintCacheEntry>& entries() const { return entries_; }

 private:
  std::vector<HintCacheEntry> entries_;
  std::map<std::string, std::size_t> by_id_;
  std::map<std::string, std::size_t> by_question_;
};

void write_hint_cache(std::ostream& out, const std::vector<HintCacheEntry>& entries);

struct HttpHintConfig {
  std::string base_url;  // e.g. http://localhost:8000/v1
  std::string api_key;
  std::string model;
  std::chrono::seconds timeout{60};

  /// CPR_HINT_BASE_URL, CPR_HINT_API_KEY, CPR_HINT_MODEL. Throws ConfigError
  /// when the base URL is unset.
  static HttpHintConfig from_env();
};

/// The one-shot prompt with {H} and {question} substituted.
std::string hint_prompt(const std::string& question, std::size_t max_hop);

/// OpenAI-compatible chat completions, temperature 0.
class HttpHintProvider final : public HintProvider {
 public:
  explicit HttpHintProvider(HttpHintConfig cfg) : cfg_(std::move(cfg)) {}
  HintChains chains(const std::string& question, std::size_t max_hop) const override;

 private:
  HttpHintConfig cfg_;
};

}  // namespace cpr
