#include "cpr/hints.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <nlohmann/json.hpp>
#include <ostream>

#include "cpr/error.hpp"
#include "cpr/log.hpp"

#ifdef CPR_HTTPS
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include "httplib.h"

namespace cpr {

using nlohmann::json;

namespace {

HintChains chains_from_json(const json& obj) {
  if (!obj.is_object() || !obj.contains("chains") || !obj["chains"].is_array()) {
    throw ParseError("hint reply must be an object with a 'chains' array");
  }
  HintChains out;
  const json& arr = obj["chains"];
  for (const json& chain : arr) {
    if (!chain.is_array()) throw ParseError("every hint chain must be an array of relation labels");
    std::vector<std::string> labels;
    for (const json& r : chain) {
      if (!r.is_string()) throw ParseError("hint relation labels must be strings");
      labels.push_back(r.get<std::string>());
    }
    if (out.size() < kMaxHintChains) out.push_back(std::move(labels));
  }
  if (arr.size() > kMaxHintChains) {
    warn("hint reply has " + std::to_string(arr.size()) + " chains; keeping the first " +
         std::to_string(kMaxHintChains));
  }
  return out;
}

json chains_to_json(const HintChains& chains) {
  json arr = json::array();
  for (const auto& c : chains) arr.push_back(c);
  return arr;
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

}  // namespace

HintChains parse_hint_json(std::string_view text) {
  json obj;
  try {
    obj = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("hint reply is not JSON: ") + e.what());
  }
  return chains_from_json(obj);
}

HintSet flatten_hints(const HintChains& chains) {
  HintSet out;
  for (const auto& c : chains) out.insert(out.end(), c.begin(), c.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

HintSet generate_hints(const HintProvider& provider, const std::string& question, std::size_t max_hop) {
  try {
    return flatten_hints(provider.chains(question, max_hop));
  } catch (const std::exception& e) {
    warn(std::string("hint generation failed, continuing without hints: ") + e.what());
    return {};
  }
}

HintSet generate_hints(const HintProvider& provider, const std::string& query_id, const std::string& question,
                       std::size_t max_hop) {
  try {
    return flatten_hints(provider.chains_for(query_id, question, max_hop));
  } catch (const std::exception& e) {
    warn(std::string("hint generation failed, continuing without hints: ") + e.what());
    return {};
  }
}

std::unique_ptr<FixedHintProvider> FixedHintProvider::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open hint file '" + path + "'", true);
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return std::make_unique<FixedHintProvider>(parse_hint_json(text));
}

HintCache::HintCache(std::vector<HintCacheEntry> entries) : entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    by_id_.emplace(entries_[i].query_id, i);
    by_question_.emplace(entries_[i].question, i);
  }
}

std::unique_ptr<HintCache> HintCache::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open hint cache '" + path + "'", true);
  std::vector<HintCacheEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json obj = json::parse(line);
      HintCacheEntry e;
      e.query_id = obj.at("query_id").get<std::string>();
      e.question = obj.at("question").get<std::string>();
      e.chains = chains_from_json(obj);
      entries.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw ParseError("hint cache line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return std::make_unique<HintCache>(std::move(entries));
}

HintChains HintCache::chains(const std::string& question, std::size_t) const {
  auto it = by_question_.find(question);
  return it == by_question_.end() ? HintChains{} : entries_[it->second].chains;
}

HintChains HintCache::chains_for(const std::string& query_id, const std::string& question,
                                 std::size_t max_hop) const {
  if (auto it = by_id_.find(query_id); it != by_id_.end()) return entries_[it->second].chains;
  return chains(question, max_hop);
}

void write_hint_cache(std::ostream& out, const std::vector<HintCacheEntry>& entries) {
  for (const HintCacheEntry& e : entries) {
    nlohmann::ordered_json obj;
    obj["query_id"] = e.query_id;
    obj["question"] = e.question;
    obj["chains"] = chains_to_json(e.chains);
    out << obj.dump() << '\n';
  }
}

HttpHintConfig HttpHintConfig::from_env() {
  auto get = [](const char* name) {
    const char* v = std::getenv(name);
    return v ? std::string(v) : std::string();
  };
  HttpHintConfig cfg;
  cfg.base_url = get("CPR_HINT_BASE_URL");
  cfg.api_key = get("CPR_HINT_API_KEY");
  cfg.model = get("CPR_HINT_MODEL");
  if (cfg.base_url.empty()) throw ConfigError("hint provider 'http' needs CPR_HINT_BASE_URL");
  return cfg;
}

std::string hint_prompt(const std::string& question, std::size_t max_hop) {
  std::string p =
      "You are helping a Freebase-style KGQA system.\n"
      "Given a question, propose up to 4 likely relation chains (1 to {H} hops).\n"
      "Relations must be in dot-separated format like \"common.topic.image\".\n"
      "Output STRICT JSON ONLY in this exact format:\n"
      "{\"chains\":[[\"relation1\"],[\"relationA\",\"relationB\"]]}\n"
      "Example of correct output:\n"
      "{\"chains\":[[\"people.person.place_of_birth\"], "
      "[\"location.location.contains\",\"people.person.nationality\"]]}\n"
      "Question: {question}\n"
      "JSON:";
  replace_all(p, "{H}", std::to_string(max_hop));
  replace_all(p, "{question}", question);
  return p;
}

HintChains HttpHintProvider::chains(const std::string& question, std::size_t max_hop) const {
  const std::string& url = cfg_.base_url;
  const std::size_t scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("hint base URL needs a scheme: '" + url + "'");
  const std::size_t path_start = url.find('/', scheme_end + 3);
  const std::string origin = url.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? std::string() : url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

  httplib::Client client(origin);
  client.set_connection_timeout(cfg_.timeout);
  client.set_read_timeout(cfg_.timeout);
  httplib::Headers headers;
  if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

  nlohmann::ordered_json body;
  body["model"] = cfg_.model;
  body["temperature"] = 0;
  body["messages"] = json::array({{{"role", "user"}, {"content", hint_prompt(question, max_hop)}}});

  auto res = client.Post(prefix + "/chat/completions", headers, body.dump(), "application/json");
  if (!res) throw IoError("hint request failed: " + httplib::to_string(res.error()));
  if (res->status != 200) throw IoError("hint endpoint returned HTTP " + std::to_string(res->status));

  std::string content;
  try {
    content = json::parse(res->body).at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("unexpected chat completion response: ") + e.what());
  }
  // Tolerate code fences around the object.
  const std::size_t open = content.find('{');
  const std::size_t close = content.rfind('}');
  if (open == std::string::npos || close == std::string::npos || close < open) {
    throw ParseError("hint reply holds no JSON object");
  }
  return parse_hint_json(std::string_view(content).substr(open, close - open + 1));
}

}  // namespace cpr
