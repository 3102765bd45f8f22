#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "cryptosynth/llm/backend.hpp"

namespace cryptosynth::llm {

struct HttpResponse {
  int status = 0;  // 0 = no response (connect/read failure)
  std::string body;
  std::string error;
};

using Headers = std::multimap<std::string, std::string>;
using HttpPost = std::function<HttpResponse(const std::string& url, const Headers& headers,
                                            const std::string& body)>;

// cpp-httplib client; https URLs need OpenSSL support compiled in.
HttpPost default_http_post(std::chrono::seconds timeout = std::chrono::seconds(120));

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{500};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{30000};

  std::chrono::milliseconds backoff(int attempt) const;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

// Bounds concurrent in-flight requests and requests started per minute.
// Zero disables the corresponding limit.
class RequestLimiter {
 public:
  using Clock = std::chrono::steady_clock;

  RequestLimiter(std::size_t max_in_flight, std::size_t per_minute);

  class Permit {
   public:
    explicit Permit(RequestLimiter* owner) : owner_(owner) {}
    Permit(Permit&& o) noexcept : owner_(o.owner_) { o.owner_ = nullptr; }
    Permit(const Permit&) = delete;
    ~Permit();

   private:
    RequestLimiter* owner_;
  };

  Permit acquire();
  std::size_t in_flight() const;
  std::size_t peak_in_flight() const;

 private:
  void release();

  std::size_t max_in_flight_;
  std::size_t per_minute_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::size_t in_flight_ = 0;
  std::size_t peak_ = 0;
  std::deque<Clock::time_point> started_;
};

// Append-only JSONL of request/response pairs. Registered secrets are
// replaced with "[REDACTED]" anywhere they occur; headers are never logged.
class AuditLog {
 public:
  explicit AuditLog(const std::filesystem::path& path);

  void add_secret(std::string secret);
  void record(const std::string& tag, const nlohmann::json& request, const nlohmann::json& outcome);
  std::string redact(std::string text) const;

 private:
  std::mutex mu_;
  std::ofstream out_;
  std::vector<std::string> secrets_;
};

struct HttpBackendConfig {
  std::string base_url;  // e.g. https://api.openai.com/v1
  std::string api_key;
  std::string model;
  nlohmann::json sampling_defaults = nlohmann::json::object();
  RetryPolicy retry;
  std::size_t max_in_flight = 4;
  std::size_t requests_per_minute = 0;
};

// Shared machinery for the OpenAI-compatible endpoints: auth header, retry
// with exponential backoff on transport errors / 429 / 5xx, limiter, audit.
class HttpEndpoint {
 public:
  HttpEndpoint(HttpBackendConfig config, HttpPost post, std::shared_ptr<AuditLog> audit = nullptr,
               Sleeper sleeper = {});

  nlohmann::json post_json(const std::string& path, const nlohmann::json& body, const std::string& tag);

  const HttpBackendConfig& config() const { return config_; }
  std::size_t attempts() const { return attempts_; }
  const RequestLimiter& limiter() const { return limiter_; }

 private:
  HttpBackendConfig config_;
  HttpPost post_;
  std::shared_ptr<AuditLog> audit_;
  Sleeper sleeper_;
  RequestLimiter limiter_;
  std::atomic<std::size_t> attempts_{0};
};

class HttpChatBackend : public ChatBackend {
 public:
  explicit HttpChatBackend(std::shared_ptr<HttpEndpoint> endpoint) : endpoint_(std::move(endpoint)) {}

  std::string chat(const ChatRequest& req) override;
  std::string name() const override { return "http:" + endpoint_->config().model; }

 private:
  std::shared_ptr<HttpEndpoint> endpoint_;
};

class HttpEmbedder : public Embedder {
 public:
  // dim 0 means: learn it from the first response.
  HttpEmbedder(std::shared_ptr<HttpEndpoint> endpoint, std::size_t dim = 0)
      : endpoint_(std::move(endpoint)), dim_(dim) {}

  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;
  std::size_t dim() const override { return dim_; }

 private:
  std::shared_ptr<HttpEndpoint> endpoint_;
  std::mutex mu_;
  std::size_t dim_;
};

// Cohere/Jina-style POST {base}/rerank.
class HttpReranker : public Reranker {
 public:
  explicit HttpReranker(std::shared_ptr<HttpEndpoint> endpoint) : endpoint_(std::move(endpoint)) {}

  std::vector<RerankHit> rerank(const std::string& query, const std::vector<std::string>& chunks,
                                std::size_t top_k) override;

 private:
  std::shared_ptr<HttpEndpoint> endpoint_;
};

}  // namespace cryptosynth::llm
