#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cryptosynth/common/error.hpp"

namespace cryptosynth::llm {

// Failures talking to a model backend. Subclasses refine the cause.
class BackendFailure : public Error {
 public:
  explicit BackendFailure(const std::string& detail) : Error("BackendFailure", detail) {}

 protected:
  BackendFailure(std::string kind, const std::string& detail) : Error(std::move(kind), detail) {}
};

class TransportError : public BackendFailure {
 public:
  TransportError(int code, const std::string& detail)
      : BackendFailure("Transport", "transport error " + std::to_string(code) + ": " + detail), code_(code) {}
  // HTTP status, or 0 when no response arrived.
  int code() const noexcept { return code_; }

 private:
  int code_;
};

class RetriesExhausted : public BackendFailure {
 public:
  RetriesExhausted(int retries, const std::string& last)
      : BackendFailure("Exhausted", "gave up after " + std::to_string(retries) + " retries: " + last),
        retries_(retries) {}
  int retries() const noexcept { return retries_; }

 private:
  int retries_;
};

class AuthFailure : public BackendFailure {
 public:
  explicit AuthFailure(const std::string& detail) : BackendFailure("AuthFailure", detail) {}
};

class DimMismatch : public BackendFailure {
 public:
  DimMismatch(std::size_t expected, std::size_t got)
      : BackendFailure("DimMismatch", "embedding dim " + std::to_string(got) + " != " + std::to_string(expected)) {}
};

struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  // temperature, max_tokens, ... forwarded verbatim.
  nlohmann::json sampling = nlohmann::json::object();
  // Audit trail key, e.g. "graph.score".
  std::string tag;

  static ChatRequest user(std::string content, std::string tag = {});
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string chat(const ChatRequest& req) = 0;
  virtual std::string name() const = 0;
};

using EmbeddingVector = std::vector<double>;

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) = 0;
  virtual std::size_t dim() const = 0;
};

struct RerankHit {
  std::size_t index = 0;
  double score = 0.0;
  friend bool operator==(const RerankHit&, const RerankHit&) = default;
};

class Reranker {
 public:
  virtual ~Reranker() = default;
  // min(top_k, chunks.size()) hits, score descending, ties by original index.
  virtual std::vector<RerankHit> rerank(const std::string& query, const std::vector<std::string>& chunks,
                                        std::size_t top_k) = 0;
};

// Orders raw scores into rerank hits (descending, stable on index).
std::vector<RerankHit> top_hits(const std::vector<double>& scores, std::size_t top_k);

struct Backends {
  std::shared_ptr<ChatBackend> chat;
  std::shared_ptr<Embedder> embedder;
  std::shared_ptr<Reranker> reranker;
};

}  // namespace cryptosynth::llm
