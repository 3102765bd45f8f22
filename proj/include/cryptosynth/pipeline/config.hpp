#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cryptosynth/common/error.hpp"
#include "cryptosynth/detcrypt/cipher.hpp"
#include "cryptosynth/synthesis/synthesis.hpp"

namespace cryptosynth::pipeline {

class ConfigInvalid : public Error {
 public:
  ConfigInvalid(std::string field, const std::string& detail)
      : Error("ConfigInvalid", field + ": " + detail), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

struct PathsConfig {
  std::filesystem::path corpus;
  std::filesystem::path out = "cryptosynth-out";
  std::optional<std::filesystem::path> prompts;
  std::optional<std::filesystem::path> recognizers;
  std::optional<std::filesystem::path> review;  // edited review file to import
  std::optional<std::filesystem::path> mcq;
  std::optional<std::filesystem::path> responses;
  std::optional<std::filesystem::path> filter_rules;
};

struct CryptoConfig {
  std::filesystem::path key_file;
  detcrypt::CipherMode mode = detcrypt::CipherMode::Ecb;
  bool casefold = false;
};

struct DetectConfig {
  std::string sidecar = "none";  // none | mock | stdio | http
  std::vector<std::string> sidecar_command;
  std::string sidecar_url;
  std::optional<std::filesystem::path> gazetteer;
  std::size_t workers = 1;
};

struct GraphConfig {
  double threshold = 0.5;
  std::size_t k_max = 4;
  std::size_t pair_budget = 200;
  std::size_t max_tuples = 0;
  std::size_t context_chars = 6000;
  bool llm_extract = false;
  std::size_t workers = 4;
};

struct SynthConfig {
  std::size_t budget_tokens = 3000;
  std::size_t avg_record_tokens = synthesis::kDefaultRecordTokens;
  synthesis::SynthMode mode = synthesis::SynthMode::EncryptFirst;
  std::vector<synthesis::RecordKind> kinds = {synthesis::RecordKind::QaPair};
  std::size_t min_length = 20;
  std::size_t workers = 4;
};

struct BackendConfig {
  std::string kind = "mock";  // mock | http
  std::string base_url;
  std::string api_key;
  std::string model;
  std::string embed_model;
  std::string rerank_model;
  std::string embedder = "backend";  // backend | sidecar | hash
  std::string mock_answers = "oracle";  // oracle | first | gibberish
  nlohmann::json sampling = nlohmann::json::object();
  int max_retries = 3;
  std::size_t max_in_flight = 4;
  std::size_t requests_per_minute = 0;
  double timeout_s = 60.0;
  std::optional<std::filesystem::path> audit_log;
};

struct RagConfigSection {
  std::size_t chunk_size = 1024;
  std::size_t top_k = 4;
  std::size_t retrieve_k = 0;
  bool sweep = false;
  std::string index_corpus = "encrypted";  // encrypted | synthetic | original
  bool encrypt_questions = true;
  std::vector<EntityType> question_types;  // empty: every type
  std::vector<std::size_t> sweep_chunk_sizes;
  std::vector<std::size_t> sweep_top_ks;
  std::size_t workers = 4;
};

struct AuditConfig {
  std::string group_key = "article_id";
  bool recheck_structured = true;
};

struct PipelineConfig {
  PathsConfig paths;
  CryptoConfig crypto;
  DetectConfig detect;
  GraphConfig graph;
  SynthConfig synth;
  BackendConfig backend;
  RagConfigSection rag;
  AuditConfig audit;

  // The document as written (before ${VAR} expansion), used for hashing and
  // manifests so secrets never leave the environment.
  nlohmann::json raw = nlohmann::json::object();
  std::filesystem::path base_dir;

  // Throws ConfigInvalid naming the first offending field.
  static PipelineConfig from_json(const nlohmann::json& raw, const std::filesystem::path& base_dir);
  static PipelineConfig load_toml(const std::filesystem::path& path);
  static nlohmann::json toml_to_json(const std::filesystem::path& path);

  // Sets raw[section][key] = value and reparses, so overrides are hashed too.
  void override_value(const std::string& section, const std::string& key, const nlohmann::json& value);

  // Checks that inputs needed by `stage` exist.
  void validate_for(const std::string& stage) const;
};

// Replaces ${NAME} with the environment value; unset names are ConfigInvalid(field).
std::string expand_env(const std::string& value, const std::string& field);

}  // namespace cryptosynth::pipeline
