#pragma once

#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "cryptosynth/llm/backend.hpp"

namespace cryptosynth::llm {

// Deterministic offline chat backend. Lookup order: exact fixture keyed by
// the last user message, then the responder, else BackendFailure.
class MockChatBackend : public ChatBackend {
 public:
  using Responder = std::function<std::string(const ChatRequest&)>;

  explicit MockChatBackend(std::map<std::string, std::string> fixtures = {}, Responder responder = {});

  std::string chat(const ChatRequest& req) override;
  std::string name() const override { return "mock"; }

  std::size_t calls() const;

 private:
  std::map<std::string, std::string> fixtures_;
  Responder responder_;
  mutable std::mutex mu_;
  std::size_t calls_ = 0;
};

// Seeded hash of character n-grams projected onto `dim` signed buckets,
// then L2-normalised. Empty text maps to the zero vector.
class HashEmbedder : public Embedder {
 public:
  explicit HashEmbedder(std::size_t dim = 256, std::size_t ngram = 3, std::uint64_t seed = 0);

  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;
  std::size_t dim() const override { return dim_; }

  EmbeddingVector embed_one(const std::string& text) const;

 private:
  std::size_t dim_;
  std::size_t ngram_;
  std::uint64_t seed_;
};

// Tokens used for overlap scoring: cipher renderings kept whole, ASCII
// alphanumeric runs lowercased, each CJK codepoint on its own.
std::set<std::string> overlap_tokens(const std::string& text);

// Score = number of distinct query tokens present in the chunk.
class OverlapReranker : public Reranker {
 public:
  std::vector<RerankHit> rerank(const std::string& query, const std::vector<std::string>& chunks,
                                std::size_t top_k) override;
};

}  // namespace cryptosynth::llm
