#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cryptosynth/audit/audit.hpp"
#include "cryptosynth/common/error.hpp"
#include "cryptosynth/common/prompt.hpp"
#include "cryptosynth/corpus/corpus.hpp"
#include "cryptosynth/graph/graph.hpp"
#include "cryptosynth/llm/backend.hpp"

namespace cryptosynth::synthesis {

class EmptyTupleSet : public Error {
 public:
  EmptyTupleSet() : Error("EmptyTupleSet", "no entity tuples to synthesize from") {}
};

// A backend failure while generating for one tuple. Keeps the cause's kind.
class TupleFailure : public llm::BackendFailure {
 public:
  TupleFailure(std::size_t tuple_index, const Error& cause)
      : llm::BackendFailure(cause.kind(), "tuple " + std::to_string(tuple_index) + ": " + cause.what()),
        tuple_index_(tuple_index) {}
  std::size_t tuple_index() const noexcept { return tuple_index_; }

 private:
  std::size_t tuple_index_;
};

enum class RecordKind { QaPair, RelationAnalysis };

// "qa_pair" / "relation_analysis"; parse also accepts "qa" and "relation".
std::string_view to_string(RecordKind k) noexcept;
std::optional<RecordKind> parse_record_kind(std::string_view s) noexcept;

// Encrypt-first generates from the encrypted corpus; encrypt-after generates
// from plaintext and encrypts the output afterwards.
enum class SynthMode { EncryptFirst, EncryptAfter };

std::string_view to_string(SynthMode m) noexcept;  // "enc-first" / "enc-after"
std::optional<SynthMode> parse_synth_mode(std::string_view s) noexcept;

struct SynthRecord {
  std::string record_id;  // "<kind>:<tuple index>:<sequence>"
  RecordKind kind = RecordKind::QaPair;
  graph::EntityTuple tuple;
  std::string text;
  std::vector<std::string> source_doc_ids;
  std::map<std::string, std::string> backend_meta;
  bool accepted = false;
  std::optional<std::string> reject_reason;

  friend bool operator==(const SynthRecord&, const SynthRecord&) = default;
};

void to_json(nlohmann::json& j, const SynthRecord& r);
void from_json(const nlohmann::json& j, SynthRecord& r);

struct PromptSet {
  PromptTemplate qa_pair;
  PromptTemplate relation_analysis;

  // <dir>/qa_pair.txt and <dir>/relation_analysis.txt override the builtins.
  static PromptSet resolve(const std::optional<std::filesystem::path>& dir = std::nullopt);
  const PromptTemplate& for_kind(RecordKind k) const { return k == RecordKind::QaPair ? qa_pair : relation_analysis; }
};

struct SynthPlan {
  std::size_t budget_tokens = 0;
  std::vector<graph::EntityTuple> tuples;
  std::size_t per_tuple_records = 1;
  PromptSet prompts;
};

inline constexpr std::size_t kDefaultRecordTokens = 300;

// per_tuple_records = ceil(budget / (|tuples| * avg_record_tokens)), at least 1.
// Throws EmptyTupleSet, or std::invalid_argument for a zero budget or estimate.
SynthPlan plan(std::size_t budget_tokens, std::vector<graph::EntityTuple> tuples,
               std::size_t avg_record_tokens = kDefaultRecordTokens, PromptSet prompts = PromptSet::resolve());

struct SynthOptions {
  std::size_t records = 1;  // completions per tuple
  std::size_t context_chars = 6000;
  nlohmann::json sampling = nlohmann::json::object();
};

// One completion per record, in sequence order. Backend errors surface as
// TupleFailure.
std::vector<SynthRecord> synth_for_tuple(std::size_t tuple_index, const graph::EntityTuple& tuple,
                                         const std::vector<const corpus::Document*>& context, RecordKind kind,
                                         llm::ChatBackend& llm, const PromptTemplate& prompt,
                                         const SynthOptions& options = {});

// Documents referenced by any member, in corpus order.
std::vector<const corpus::Document*> tuple_context(const graph::EntityTuple& tuple,
                                                   const std::vector<graph::EntityNode>& nodes,
                                                   const corpus::Corpus& corpus);

// All tuples of the plan, `workers` at a time; output is in (tuple, sequence) order.
std::vector<SynthRecord> run_synthesis(const SynthPlan& plan, RecordKind kind,
                                       const std::vector<graph::EntityNode>& nodes, const corpus::Corpus& corpus,
                                       llm::ChatBackend& llm, std::size_t workers = 1,
                                       SynthOptions options = {});

struct FilterRules {
  std::size_t min_length = 20;  // codepoints
  std::string question_delimiter = "Question:";
  std::string answer_delimiter = "Answer:";
  bool require_entities = true;
  // Null disables the plaintext check (encrypt-after mode).
  std::shared_ptr<const audit::PlaintextInventory> inventory;

  // {"min_length", "question_delimiter", "answer_delimiter", "require_entities",
  // "inventory"}; a relative inventory path resolves against `base_dir`.
  static FilterRules from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static FilterRules load(const std::filesystem::path& path);
};

// Rule order: too_short, missing_question_segment, missing_answer_segment,
// missing_entity, plaintext_pii. Returns copies with accepted/reject_reason set.
std::pair<std::vector<SynthRecord>, std::vector<SynthRecord>> filter_records(const std::vector<SynthRecord>& records,
                                                                             const FilterRules& rules);

// One synthetic document per accepted record (doc_id = record_id,
// parent_ids = source_doc_ids), persisted to `path`.
corpus::Corpus emit_corpus(const std::vector<SynthRecord>& kept, const std::filesystem::path& path);

void write_records(const std::filesystem::path& path, const std::vector<SynthRecord>& records);
std::vector<SynthRecord> read_records(const std::filesystem::path& path);

}  // namespace cryptosynth::synthesis
