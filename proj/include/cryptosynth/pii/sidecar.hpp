#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cryptosynth/common/entity.hpp"
#include "cryptosynth/common/error.hpp"
#include "cryptosynth/corpus/corpus.hpp"
#include "cryptosynth/llm/backend.hpp"

namespace cryptosynth::pii {

class SidecarUnavailable : public Error {
 public:
  explicit SidecarUnavailable(const std::string& detail) : Error("SidecarUnavailable", detail) {}
};

class ProtocolViolation : public Error {
 public:
  explicit ProtocolViolation(const std::string& detail) : Error("ProtocolViolation", detail) {}
};

// Throws ProtocolViolation unless `response` is a well-formed reply to `op`:
// ner -> spans[{start,end,type,...}], embed -> vectors of one dim,
// health -> status object. ok=false must carry a string error.
void validate_response(const std::string& op, const nlohmann::json& response);

// Client side of the sidecar protocol. One request, one response; calls are
// serialised, so a client may be shared across threads.
class SidecarClient {
 public:
  virtual ~SidecarClient() = default;

  // Sends one request and returns the validated response (ok == true).
  nlohmann::json call(const nlohmann::json& request);

  nlohmann::json health();
  nlohmann::json ner(const std::string& text, const std::string& lang);
  std::vector<llm::EmbeddingVector> embed(const std::vector<std::string>& texts);

 protected:
  // Raw transport: one JSON body out, one JSON body back.
  virtual std::string exchange(const std::string& body) = 0;

 private:
  std::mutex mu_;
};

// Spawns `argv` and speaks newline-delimited JSON over its stdin/stdout.
class StdioSidecarClient : public SidecarClient {
 public:
  explicit StdioSidecarClient(std::vector<std::string> argv,
                              std::chrono::milliseconds timeout = std::chrono::seconds(60));
  ~StdioSidecarClient() override;
  StdioSidecarClient(const StdioSidecarClient&) = delete;
  StdioSidecarClient& operator=(const StdioSidecarClient&) = delete;

 protected:
  std::string exchange(const std::string& body) override;

 private:
  void shutdown();

  int fd_ = -1;
  int pid_ = -1;
  std::chrono::milliseconds timeout_;
  std::string buffer_;
};

// POSTs each body to {base_url}/v1/op.
class HttpSidecarClient : public SidecarClient {
 public:
  explicit HttpSidecarClient(std::string base_url, std::chrono::seconds timeout = std::chrono::seconds(60));

 protected:
  std::string exchange(const std::string& body) override;

 private:
  std::string base_url_;
  std::chrono::seconds timeout_;
};

// Handles requests in-process; used with MockSidecar or test doubles.
class InProcessSidecarClient : public SidecarClient {
 public:
  using Handler = std::function<nlohmann::json(const nlohmann::json&)>;
  explicit InProcessSidecarClient(Handler handler) : handler_(std::move(handler)) {}

 protected:
  std::string exchange(const std::string& body) override;

 private:
  Handler handler_;
};

// Deterministic stand-in for the model sidecar: gazetteer NER (longest
// surface first, no overlaps) and hash-projection embeddings.
class MockSidecar {
 public:
  explicit MockSidecar(std::vector<std::pair<std::string, EntityType>> gazetteer = {}, std::size_t dim = 256);

  // Loads [{"surface": ..., "type": ...}].
  static MockSidecar from_gazetteer_file(const std::filesystem::path& path, std::size_t dim = 256);

  nlohmann::json handle(const nlohmann::json& request) const;

 private:
  std::vector<std::pair<std::string, EntityType>> gazetteer_;
  std::size_t dim_;
};

// Maps sidecar labels (PERSON, PER, GPE, LOC, ORG, ...) to entity types.
EntityType map_sidecar_label(const std::string& label);

struct SidecarDetection {
  std::vector<EntitySpan> spans;
  std::size_t dropped = 0;
};

// NER spans for one document; offsets failing validation are dropped and counted.
SidecarDetection detect_sidecar(const corpus::Document& doc, SidecarClient& client);

// Embedder backed by the sidecar's embed op.
class SidecarEmbedder : public llm::Embedder {
 public:
  explicit SidecarEmbedder(std::shared_ptr<SidecarClient> client);

  std::vector<llm::EmbeddingVector> embed(const std::vector<std::string>& texts) override;
  std::size_t dim() const override { return dim_; }

 private:
  std::shared_ptr<SidecarClient> client_;
  std::size_t dim_ = 0;
};

}  // namespace cryptosynth::pii
