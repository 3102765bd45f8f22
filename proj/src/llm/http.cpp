#include "cryptosynth/llm/http.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include <httplib.h>

namespace cryptosynth::llm {

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw BackendFailure("URL without scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

bool transient(int status) { return status == 0 || status == 429 || status >= 500; }

}  // namespace

HttpPost default_http_post(std::chrono::seconds timeout) {
  return [timeout](const std::string& url, const Headers& headers, const std::string& body) {
    const SplitUrl parts = split_url(url);
    httplib::Client client(parts.origin);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers h(headers.begin(), headers.end());
    auto res = client.Post(parts.path, h, body, "application/json");
    HttpResponse out;
    if (!res) {
      out.error = httplib::to_string(res.error());
      return out;
    }
    out.status = res->status;
    out.body = res->body;
    return out;
  };
}

std::chrono::milliseconds RetryPolicy::backoff(int attempt) const {
  const double ms = static_cast<double>(initial_backoff.count()) * std::pow(multiplier, attempt);
  return std::chrono::milliseconds(
      static_cast<std::int64_t>(std::min(ms, static_cast<double>(max_backoff.count()))));
}

RequestLimiter::RequestLimiter(std::size_t max_in_flight, std::size_t per_minute)
    : max_in_flight_(max_in_flight), per_minute_(per_minute) {}

RequestLimiter::Permit RequestLimiter::acquire() {
  std::unique_lock lock(mu_);
  for (;;) {
    if (max_in_flight_ != 0 && in_flight_ >= max_in_flight_) {
      cv_.wait(lock);
      continue;
    }
    if (per_minute_ != 0) {
      const auto now = Clock::now();
      while (!started_.empty() && now - started_.front() >= std::chrono::minutes(1)) started_.pop_front();
      if (started_.size() >= per_minute_) {
        cv_.wait_until(lock, started_.front() + std::chrono::minutes(1));
        continue;
      }
      started_.push_back(now);
    }
    ++in_flight_;
    peak_ = std::max(peak_, in_flight_);
    return Permit(this);
  }
}

void RequestLimiter::release() {
  {
    std::lock_guard lock(mu_);
    --in_flight_;
  }
  cv_.notify_one();
}

std::size_t RequestLimiter::in_flight() const {
  std::lock_guard lock(mu_);
  return in_flight_;
}

std::size_t RequestLimiter::peak_in_flight() const {
  std::lock_guard lock(mu_);
  return peak_;
}

RequestLimiter::Permit::~Permit() {
  if (owner_) owner_->release();
}

AuditLog::AuditLog(const std::filesystem::path& path) : out_(path, std::ios::app | std::ios::binary) {
  if (!out_) throw IoFailure(path.string(), "cannot open audit log");
}

void AuditLog::add_secret(std::string secret) {
  std::lock_guard lock(mu_);
  if (!secret.empty()) secrets_.push_back(std::move(secret));
}

std::string AuditLog::redact(std::string text) const {
  for (const auto& s : secrets_) {
    for (auto pos = text.find(s); pos != std::string::npos; pos = text.find(s, pos)) {
      text.replace(pos, s.size(), "[REDACTED]");
    }
  }
  return text;
}

void AuditLog::record(const std::string& tag, const nlohmann::json& request, const nlohmann::json& outcome) {
  const nlohmann::json entry = {{"tag", tag}, {"request", request}, {"outcome", outcome}};
  std::lock_guard lock(mu_);
  out_ << redact(entry.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace)) << '\n';
  out_.flush();
}

HttpEndpoint::HttpEndpoint(HttpBackendConfig config, HttpPost post, std::shared_ptr<AuditLog> audit,
                           Sleeper sleeper)
    : config_(std::move(config)),
      post_(std::move(post)),
      audit_(std::move(audit)),
      sleeper_(sleeper ? std::move(sleeper) : Sleeper([](auto d) { std::this_thread::sleep_for(d); })),
      limiter_(config_.max_in_flight, config_.requests_per_minute) {
  if (audit_) audit_->add_secret(config_.api_key);
}

nlohmann::json HttpEndpoint::post_json(const std::string& path, const nlohmann::json& body, const std::string& tag) {
  std::string base = config_.base_url;
  while (!base.empty() && base.back() == '/') base.pop_back();
  const std::string url = base + path;
  Headers headers{{"Content-Type", "application/json"}};
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
  const std::string payload = body.dump();

  std::string last_error;
  for (int attempt = 0; attempt <= config_.retry.max_retries; ++attempt) {
    if (attempt > 0) sleeper_(config_.retry.backoff(attempt - 1));
    HttpResponse res;
    {
      auto permit = limiter_.acquire();
      ++attempts_;
      res = post_(url, headers, payload);
    }
    if (audit_) {
      audit_->record(tag, body, {{"attempt", attempt}, {"status", res.status}, {"body", res.body}, {"error", res.error}});
    }
    if (res.status >= 200 && res.status < 300) {
      try {
        return nlohmann::json::parse(res.body);
      } catch (const nlohmann::json::exception& e) {
        throw BackendFailure("unparseable response from " + path + ": " + e.what());
      }
    }
    if (res.status == 401 || res.status == 403) {
      throw AuthFailure("endpoint " + path + " rejected credentials (HTTP " + std::to_string(res.status) + ")");
    }
    last_error = res.status == 0 ? res.error : "HTTP " + std::to_string(res.status);
    if (!transient(res.status)) throw TransportError(res.status, last_error);
  }
  throw RetriesExhausted(config_.retry.max_retries, last_error);
}

std::string HttpChatBackend::chat(const ChatRequest& req) {
  if (req.messages.empty()) throw BackendFailure("chat request has no messages");
  nlohmann::json body = endpoint_->config().sampling_defaults;
  for (auto& [k, v] : req.sampling.items()) body[k] = v;
  body["model"] = endpoint_->config().model;
  body["messages"] = nlohmann::json::array();
  for (const auto& m : req.messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});
  const auto res = endpoint_->post_json("/chat/completions", body, req.tag);
  try {
    return res.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw BackendFailure("chat response lacks choices[0].message.content");
  }
}

std::vector<EmbeddingVector> HttpEmbedder::embed(const std::vector<std::string>& texts) {
  if (texts.empty()) return {};
  const nlohmann::json body = {{"model", endpoint_->config().model}, {"input", texts}};
  const auto res = endpoint_->post_json("/embeddings", body, "embed");
  std::vector<EmbeddingVector> out(texts.size());
  try {
    const auto& data = res.at("data");
    if (data.size() != texts.size()) throw BackendFailure("embedding count does not match input count");
    for (std::size_t i = 0; i < data.size(); ++i) {
      const std::size_t idx = data[i].value("index", i);
      if (idx >= out.size()) throw BackendFailure("embedding index out of range");
      out[idx] = data[i].at("embedding").get<EmbeddingVector>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw BackendFailure(std::string("malformed embedding response: ") + e.what());
  }
  std::lock_guard lock(mu_);
  for (const auto& v : out) {
    if (dim_ == 0) dim_ = v.size();
    if (v.size() != dim_) throw DimMismatch(dim_, v.size());
    for (double x : v) {
      if (!std::isfinite(x)) throw BackendFailure("embedding contains a non-finite value");
    }
  }
  return out;
}

std::vector<RerankHit> HttpReranker::rerank(const std::string& query, const std::vector<std::string>& chunks,
                                            std::size_t top_k) {
  if (top_k == 0) throw std::invalid_argument("rerank top_k must be >= 1");
  if (chunks.empty()) return {};
  const nlohmann::json body = {
      {"model", endpoint_->config().model}, {"query", query}, {"documents", chunks}, {"top_n", chunks.size()}};
  const auto res = endpoint_->post_json("/rerank", body, "rerank");
  // Unscored documents rank below every scored one.
  std::vector<double> scores(chunks.size(), -std::numeric_limits<double>::infinity());
  try {
    for (const auto& r : res.at("results")) {
      const std::size_t idx = r.at("index").get<std::size_t>();
      if (idx >= chunks.size()) throw BackendFailure("rerank index out of range");
      scores[idx] = r.at("relevance_score").get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw BackendFailure(std::string("malformed rerank response: ") + e.what());
  }
  return top_hits(scores, top_k);
}

}  // namespace cryptosynth::llm
