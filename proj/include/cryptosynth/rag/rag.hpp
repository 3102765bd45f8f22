#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cryptosynth/audit/audit.hpp"
#include "cryptosynth/common/prompt.hpp"
#include "cryptosynth/corpus/corpus.hpp"
#include "cryptosynth/detcrypt/cipher.hpp"
#include "cryptosynth/llm/backend.hpp"

namespace cryptosynth::rag {

struct Chunk {
  std::string chunk_id;  // "<doc_id>#<index>"
  std::string doc_id;
  std::string text;  // trimmed
  std::size_t approx_token_len = 0;
  // Byte range of the untrimmed piece in the document.
  std::size_t byte_begin = 0;
  std::size_t byte_end = 0;

  friend bool operator==(const Chunk&, const Chunk&) = default;
};

inline constexpr std::size_t kMinChunkSize = 16;

// Greedy packing of paragraphs, then sentences, then words, then single CJK
// characters, so that every chunk has at most `size` approximate tokens.
// Cuts never fall inside a cipher-token rendering. Throws
// std::invalid_argument when size < 16.
std::vector<Chunk> chunk_document(const corpus::Document& doc, std::size_t size);
std::vector<Chunk> chunk_corpus(const corpus::Corpus& corpus, std::size_t size);

// Tokens in `corpus` whose rendering crosses a chunk boundary.
std::size_t split_token_count(const corpus::Corpus& corpus, const std::vector<Chunk>& chunks);

double cosine(const llm::EmbeddingVector& a, const llm::EmbeddingVector& b);

// Exact cosine search over immutable chunk vectors.
class VectorIndex {
 public:
  VectorIndex() = default;

  std::size_t size() const noexcept { return chunks_.size(); }
  bool empty() const noexcept { return chunks_.empty(); }
  std::size_t dim() const noexcept { return dim_; }
  const std::vector<Chunk>& chunks() const noexcept { return chunks_; }

  // Top k chunk indices by cosine, ties by index.
  std::vector<llm::RerankHit> search(const llm::EmbeddingVector& query, std::size_t k) const;

 private:
  friend VectorIndex build_index(std::vector<Chunk> chunks, llm::Embedder& embedder, std::size_t batch);
  std::vector<Chunk> chunks_;
  std::vector<llm::EmbeddingVector> vectors_;
  std::size_t dim_ = 0;
};

// Throws llm::DimMismatch when a vector disagrees with embedder.dim().
VectorIndex build_index(std::vector<Chunk> chunks, llm::Embedder& embedder, std::size_t batch = 64);

struct RagConfig {
  std::size_t chunk_size = 1024;
  std::size_t top_k = 4;
  std::size_t retrieve_k = 0;  // 0 means 4 * top_k

  std::size_t pool() const noexcept { return retrieve_k == 0 ? 4 * top_k : retrieve_k; }
  // Throws std::invalid_argument unless 1 <= top_k <= pool() and chunk_size >= 16.
  void validate() const;
};

// Cosine pool of cfg.pool() chunks, reranked down to cfg.top_k.
std::vector<Chunk> retrieve(const std::string& question, const VectorIndex& index, const RagConfig& cfg,
                            llm::Embedder& embedder, llm::Reranker& reranker);

struct McqItem {
  std::string item_id;
  std::string question;
  std::array<std::string, 4> options;
  char gold = 'A';
  bool encrypted = false;

  friend bool operator==(const McqItem&, const McqItem&) = default;
};

// JSONL: {"question", "options": [4], "gold": "A".."D", "encrypted", "id"?}.
std::vector<McqItem> read_mcq(const std::filesystem::path& path);
void write_mcq(const std::filesystem::path& path, const std::vector<McqItem>& items);

// Replaces inventory surfaces in the question and options by their renderings.
McqItem encrypt_item(const McqItem& item, const audit::PlaintextInventory& inventory,
                     const detcrypt::EntityCipher& cipher);

// A bare letter ("B", "(B)", "B."), "Answer: B" / "the answer is B", or a
// parenthesized "(B)" anywhere. Anything else is nullopt.
std::optional<char> parse_answer(std::string_view response);

struct AnswerOutcome {
  std::optional<char> label;  // nullopt: format failure
  std::string raw;
  std::string prompt;
};

AnswerOutcome answer_mcq(const McqItem& item, const std::vector<Chunk>& context, llm::ChatBackend& llm,
                         const PromptTemplate& prompt);

struct ItemResult {
  std::string item_id;
  std::optional<char> chosen;
  char gold = 'A';
  bool correct = false;
  std::string raw;
  std::vector<std::string> chunk_ids;
  std::string prompt;  // kept in memory only

  bool format_failure() const noexcept { return !chosen.has_value(); }
};

struct EvalResult {
  double accuracy = 0.0;
  std::size_t n_items = 0;
  std::size_t n_correct = 0;
  std::size_t n_format_failures = 0;
  std::vector<ItemResult> items;
};

struct EvalOptions {
  std::size_t workers = 1;
  std::optional<PromptTemplate> prompt;  // defaults to the builtin "rag_answer"
};

// Chunks, indexes and answers every item. Throws std::invalid_argument on
// an empty item list.
EvalResult run_eval(const std::vector<McqItem>& items, const corpus::Corpus& corpus, const RagConfig& cfg,
                    const llm::Backends& backends, const EvalOptions& options = {});

// Same as run_eval against a prebuilt index.
EvalResult run_eval(const std::vector<McqItem>& items, const VectorIndex& index, const RagConfig& cfg,
                    const llm::Backends& backends, const EvalOptions& options = {});

struct SweepCell {
  std::size_t chunk_size = 0;
  std::size_t top_k = 0;
  EvalResult result;
};

// Every (chunk_size, top_k) pair; one index per chunk size.
std::vector<SweepCell> run_sweep(const std::vector<McqItem>& items, const corpus::Corpus& corpus,
                                 const std::vector<std::size_t>& chunk_sizes, const std::vector<std::size_t>& top_ks,
                                 const llm::Backends& backends, const EvalOptions& options = {});

nlohmann::json to_json(const EvalResult& r);
// {"cells": [...], "failure_counts": {"<chunk_size>": {"<top_k>": n}}}.
nlohmann::json sweep_report(const std::vector<SweepCell>& cells);

}  // namespace cryptosynth::rag
