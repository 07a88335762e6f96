#include "cpr/embed.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <mutex>
#include <nlohmann/json.hpp>

#include "cpr/error.hpp"
#include "cpr/rng.hpp"

namespace cpr {

bool is_zero(std::span<const double> v) {
  for (double x : v) {
    if (x != 0.0) return false;
  }
  return true;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

namespace {

void add_token_direction(std::string_view token, std::size_t dim, std::uint64_t seed, Embedding& acc) {
  Rng rng(derive_seed(seed, fnv1a(token)));
  std::vector<double> dir(dim);
  double norm2 = 0.0;
  for (double& x : dir) {
    x = rng.normal();
    norm2 += x * x;
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (std::size_t i = 0; i < dim; ++i) acc[i] += dir[i] * inv;
}

void normalize_in_place(Embedding& v) {
  double norm2 = 0.0;
  for (double x : v) norm2 += x * x;
  if (norm2 == 0.0) return;
  const double inv = 1.0 / std::sqrt(norm2);
  for (double& x : v) x *= inv;
}

}  // namespace

Embedding hash_embed(std::string_view text, std::size_t dim, std::uint64_t seed) {
  Embedding acc(dim, 0.0);
  for (const std::string& token : tokenize(text)) add_token_direction(token, dim, seed, acc);
  normalize_in_place(acc);
  return acc;
}

double similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ContractError("similarity of vectors with different dimensions");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  const double cos = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(cos, -1.0, 1.0);
}

std::string path_text(const Path& p, const KnowledgeGraph& g) {
  std::string text;
  for (const Step& s : p.steps()) {
    if (!text.empty()) text += " / ";
    text += g.relation_label(s.relation);
  }
  return text;
}

std::string query_text(const Query& q) { return q.question; }

HashEmbedder::HashEmbedder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim < 8) throw ConfigError("embedding dimension must be at least 8, got " + std::to_string(dim));
}

TableEmbedder::TableEmbedder(std::size_t dim, std::unordered_map<std::string, Embedding> table,
                             std::uint64_t fallback_seed)
    : dim_(dim), table_(std::move(table)), fallback_(dim, fallback_seed) {
  for (auto& [text, vec] : table_) {
    if (vec.size() != dim_) {
      throw LoadError("embedding for '" + text + "' has dimension " + std::to_string(vec.size()) +
                      ", table declares " + std::to_string(dim_));
    }
    normalize_in_place(vec);
  }
}

std::unique_ptr<TableEmbedder> TableEmbedder::load(const std::string& path, std::uint64_t fallback_seed) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embedding table '" + path + "'", true);
  std::string line;
  std::size_t dim = 0;
  std::unordered_map<std::string, Embedding> table;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw LoadError("embedding table line " + std::to_string(line_no) + ": " + e.what());
    }
    if (dim == 0) {
      if (!obj.contains("dimension")) throw LoadError("embedding table must start with a dimension header");
      dim = obj["dimension"].get<std::size_t>();
      continue;
    }
    table[obj.at("text").get<std::string>()] = obj.at("vector").get<Embedding>();
  }
  if (dim == 0) throw LoadError("embedding table '" + path + "' is empty");
  return std::make_unique<TableEmbedder>(dim, std::move(table), fallback_seed);
}

Embedding TableEmbedder::embed_text(std::string_view text) const {
  if (auto it = table_.find(std::string(text)); it != table_.end()) return it->second;
  return fallback_.embed_text(text);
}

CachingProvider::CachingProvider(std::shared_ptr<const EmbeddingProvider> inner) : inner_(std::move(inner)) {}

const Embedding& CachingProvider::lookup(std::string_view text) const {
  const std::string key(text);
  {
    std::shared_lock lock(mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) return *it->second;
  }
  auto value = std::make_unique<Embedding>(inner_->embed_text(text));
  std::unique_lock lock(mutex_);
  // a concurrent insert of the same key computed an identical value
  auto [it, inserted] = cache_.try_emplace(key, std::move(value));
  return *it->second;
}

Embedding CachingProvider::embed_text(std::string_view text) const { return lookup(text); }

SemanticIndex::SemanticIndex(const KnowledgeGraph& g, std::shared_ptr<const EmbeddingProvider> provider)
    : graph_(&g), cache_(std::move(provider)) {
  relations_.reserve(g.relation_count());
  for (std::uint32_t r = 0; r < g.relation_count(); ++r) {
    relations_.push_back(cache_.lookup(g.relation_label(RelationId{r})));
  }
}

}  // namespace cpr
