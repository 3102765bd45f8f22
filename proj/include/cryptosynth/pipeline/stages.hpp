#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cryptosynth/common/error.hpp"
#include "cryptosynth/pipeline/config.hpp"

namespace cryptosynth::pipeline {

// A stage aborted. cause_kind() is the kind of the underlying error.
class StageFailure : public Error {
 public:
  StageFailure(std::string stage, std::string cause_kind, const std::string& detail)
      : Error("StageFailure", detail), stage_(std::move(stage)), cause_kind_(std::move(cause_kind)) {}
  const std::string& stage() const noexcept { return stage_; }
  const std::string& cause_kind() const noexcept { return cause_kind_; }

 private:
  std::string stage_;
  std::string cause_kind_;
};

// Subcommand-specific inputs that are not part of the config file.
struct RunOptions {
  std::optional<std::filesystem::path> decrypt_input;    // decrypt: defaults to synthetic.jsonl
  std::optional<std::filesystem::path> leakage_target;   // audit-leakage: defaults to synthetic.jsonl
  std::optional<std::filesystem::path> leakage_inventory;  // audit-leakage: defaults to inventory.jsonl

  nlohmann::json to_json() const;
  static RunOptions from_json(const nlohmann::json& j);
};

struct StageResult {
  explicit StageResult(std::string name = {}) : stage(std::move(name)) {}

  std::string stage;
  nlohmann::json summary = nlohmann::json::object();
  std::vector<std::filesystem::path> inputs;
  std::vector<std::filesystem::path> outputs;  // all inside the out directory
};

// Stage names in pipeline order (pipeline itself excluded).
const std::vector<std::string>& stage_names();
bool is_stage(const std::string& name);

// Output file names, relative to the out directory.
namespace files {
inline constexpr const char* kSpans = "spans.jsonl";
inline constexpr const char* kReviewExport = "review.jsonl";
inline constexpr const char* kReviewedSpans = "reviewed_spans.jsonl";
inline constexpr const char* kEncrypted = "encrypted.jsonl";
inline constexpr const char* kInventory = "inventory.jsonl";
inline constexpr const char* kGraph = "graph.jsonl";
inline constexpr const char* kTuples = "tuples.jsonl";
inline constexpr const char* kSynthRecords = "synth_records.jsonl";
inline constexpr const char* kSynthetic = "synthetic.jsonl";
inline constexpr const char* kDecrypted = "decrypted.jsonl";
inline constexpr const char* kDecryptReport = "decrypt_report.json";
inline constexpr const char* kLeakage = "leakage_report.json";
inline constexpr const char* kHallucination = "hallucination_report.json";
inline constexpr const char* kRagEval = "rag_eval.json";
inline constexpr const char* kRagSweep = "rag_sweep.json";
inline constexpr const char* kManifestDir = "manifests";
}  // namespace files

class Runner {
 public:
  explicit Runner(PipelineConfig config, RunOptions options = {});

  // Runs one stage, or every stage for "pipeline", and writes
  // <out>/manifests/<stage>.json. Throws ConfigInvalid or StageFailure.
  StageResult run(const std::string& stage);

  const PipelineConfig& config() const noexcept { return config_; }
  std::filesystem::path out_path(const std::string& name) const { return config_.paths.out / name; }

  // Rebuilds config and options from a manifest written by run(); the
  // recorded stage is available as manifest_stage().
  static Runner from_manifest(const std::filesystem::path& manifest_path);
  const std::string& manifest_stage() const noexcept { return manifest_stage_; }

 private:
  StageResult run_one(const std::string& stage);
  void write_manifest(const StageResult& result, const std::vector<StageResult>& parts = {}) const;

  PipelineConfig config_;
  RunOptions options_;
  std::string manifest_stage_;
};

// Manifest body (exposed for tests): stage, config hash, redacted config,
// input and output hashes, versions.
nlohmann::json build_manifest(const PipelineConfig& config, const RunOptions& options, const StageResult& result);

// The raw config with literal secrets replaced; ${VAR} references are kept.
nlohmann::json redact_config(const nlohmann::json& raw);

// SHA-256 of the canonical dump of the raw (uninterpolated) config.
std::string config_hash(const nlohmann::json& raw);

}  // namespace cryptosynth::pipeline
