#pragma once

// Deterministic text embeddings. The hashing embedder stands in for a
// sentence encoder: each token maps to a seeded pseudo-random unit
// direction, a text is the normalized sum of its token directions.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cpr/graph.hpp"
#include "cpr/path.hpp"
#include "cpr/query.hpp"

namespace cpr {

/// Unit-norm vector, or all zeros for text without tokens.
using Embedding = std::vector<double>;

bool is_zero(std::span<const double> v);

/// Lowercased alphanumeric runs. Dots, underscores, whitespace and every
/// other non-alphanumeric byte separate tokens.
std::vector<std::string> tokenize(std::string_view text);

Embedding hash_embed(std::string_view text, std::size_t dim, std::uint64_t seed);

/// Cosine of the angle between a and b; 0 when either is zero.
double similarity(std::span<const double> a, std::span<const double> b);

/// Relation labels of `p` joined by " / " in traversal order.
std::string path_text(const Path& p, const KnowledgeGraph& g);
std::string query_text(const Query& q);

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::size_t dimension() const = 0;
  /// Deterministic and total.
  virtual Embedding embed_text(std::string_view text) const = 0;
};

class HashEmbedder final : public EmbeddingProvider {
 public:
  /// Throws ConfigError when dim < 8.
  HashEmbedder(std::size_t dim, std::uint64_t seed);

  std::size_t dimension() const override { return dim_; }
  Embedding embed_text(std::string_view text) const override { return hash_embed(text, dim_, seed_); }

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

/// Text -> vector table loaded from JSON Lines. The first line declares the
/// dimension (`{"dimension": d}`); every other line is
/// `{"text": ..., "vector": [...]}`. Texts absent from the table fall back to
/// the hashing embedder of the same dimension.
class TableEmbedder final : public EmbeddingProvider {
 public:
  TableEmbedder(std::size_t dim, std::unordered_map<std::string, Embedding> table, std::uint64_t fallback_seed);
  static std::unique_ptr<TableEmbedder> load(const std::string& path, std::uint64_t fallback_seed);

  std::size_t dimension() const override { return dim_; }
  Embedding embed_text(std::string_view text) const override;

 private:
  std::size_t dim_;
  std::unordered_map<std::string, Embedding> table_;
  HashEmbedder fallback_;
};

/// Memoizing wrapper, safe for concurrent use.
class CachingProvider final : public EmbeddingProvider {
 public:
  explicit CachingProvider(std::shared_ptr<const EmbeddingProvider> inner);

  std::size_t dimension() const override { return inner_->dimension(); }
  Embedding embed_text(std::string_view text) const override;

  /// Cached lookup without copying; the reference stays valid for the
  /// lifetime of the provider.
  const Embedding& lookup(std::string_view text) const;

 private:
  std::shared_ptr<const EmbeddingProvider> inner_;
  mutable std::shared_mutex mutex_;
  mutable std::unordered_map<std::string, std::unique_ptr<Embedding>> cache_;
};

/// Embeddings of everything a graph query touches: relation labels
/// (precomputed), path texts and question texts (memoized). Thread-safe.
class SemanticIndex {
 public:
  SemanticIndex(const KnowledgeGraph& g, std::shared_ptr<const EmbeddingProvider> provider);

  const KnowledgeGraph& graph() const { return *graph_; }
  std::size_t dimension() const { return cache_.dimension(); }

  const Embedding& relation(RelationId r) const { return relations_.at(r.value); }
  const Embedding& text(std::string_view text) const { return cache_.lookup(text); }
  const Embedding& path(const Path& p) const { return cache_.lookup(path_text(p, *graph_)); }

 private:
  const KnowledgeGraph* graph_;
  CachingProvider cache_;
  std::vector<Embedding> relations_;
};

}  // namespace cpr
