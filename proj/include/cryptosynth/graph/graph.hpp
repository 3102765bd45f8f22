#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cryptosynth/common/entity.hpp"
#include "cryptosynth/common/error.hpp"
#include "cryptosynth/common/prompt.hpp"
#include "cryptosynth/corpus/corpus.hpp"
#include "cryptosynth/llm/backend.hpp"
#include "cryptosynth/pii/merge.hpp"

namespace cryptosynth::graph {

class ScoreParseFailure : public Error {
 public:
  explicit ScoreParseFailure(std::string response)
      : Error("ScoreParseFailure", "no parsable \"Score:\" line in response"), response_(std::move(response)) {}
  const std::string& response() const noexcept { return response_; }

 private:
  std::string response_;
};

class DanglingEdge : public Error {
 public:
  DanglingEdge(const std::string& a, const std::string& b)
      : Error("DanglingEdge", "edge (" + a + ", " + b + ") references a node outside the graph") {}
};

struct EntityNode {
  std::string entity_id;  // canonical surface or cipher rendering
  EntityType entity_type = EntityType::Other;
  std::size_t mention_count = 1;
  std::vector<std::string> doc_refs;  // sorted, unique

  friend bool operator==(const EntityNode&, const EntityNode&) = default;
};

struct WeightedEdge {
  std::string a;  // a < b
  std::string b;
  double score = 0.0;
  std::string rationale;

  friend bool operator==(const WeightedEdge&, const WeightedEdge&) = default;
};

struct EntityGraph {
  std::vector<EntityNode> nodes;  // sorted by entity_id
  std::vector<WeightedEdge> edges;  // sorted by (a, b)
  double threshold = 0.5;

  std::size_t n() const noexcept { return nodes.size(); }
  const EntityNode* find(const std::string& id) const;

  friend bool operator==(const EntityGraph&, const EntityGraph&) = default;
};

struct EntityTuple {
  std::vector<std::string> members;  // members[0] is the center

  const std::string& center() const { return members.front(); }
  std::size_t k() const noexcept { return members.size(); }

  friend bool operator==(const EntityTuple&, const EntityTuple&) = default;
};

struct TupleSet {
  std::vector<EntityTuple> tuples;
  std::size_t skipped = 0;  // centers with fewer than k-1 neighbours
};

// Spans for every well-formed cipher token in the corpus (surface = rendering,
// type from the prefix). This is how entities are found in encrypted text.
pii::SpanMap cipher_token_spans(const corpus::Corpus& corpus);

struct ExtractOptions {
  llm::ChatBackend* llm = nullptr;  // null: spans only
  std::optional<PromptTemplate> prompt;  // defaults to the builtin "extract"
  std::size_t context_chars = 6000;
  bool casefold = false;
};

// Parses "- TYPE: surface" lines; unknown types and blank surfaces are skipped.
std::vector<std::pair<EntityType, std::string>> parse_extraction(const std::string& response);

// Union of span entities and (optionally) LLM-proposed entities, keyed by
// canonical surface. LLM proposals only count when found verbatim in the
// document and never duplicate an existing node. Sorted by entity_id.
std::vector<EntityNode> extract_entities(const corpus::Corpus& corpus, const pii::SpanMap& spans,
                                         const ExtractOptions& options = {});

struct ParsedScore {
  double value = 0.0;
  bool clamped = false;
};

// Last line starting with "score:" (case-insensitive, markdown emphasis,
// headings and bullets ignored); first decimal after the colon, clamped to [0,1].
ParsedScore parse_score_detail(const std::string& response);
double parse_score(const std::string& response);

struct ScoreOptions {
  std::optional<PromptTemplate> prompt;  // defaults to the builtin "association"
  std::size_t context_chars = 6000;
  int retries = 1;
};

// Documents shared by both nodes, else those mentioning either one.
std::vector<const corpus::Document*> pair_context(const EntityNode& a, const EntityNode& b,
                                                  const corpus::Corpus& corpus);

std::string render_context(const std::vector<const corpus::Document*>& docs, std::size_t max_chars);

WeightedEdge score_pair(const EntityNode& a, const EntityNode& b, const std::vector<const corpus::Document*>& context,
                        llm::ChatBackend& llm, const ScoreOptions& options = {});

// Scores each scheduled pair, up to `workers` at a time. Result order follows `pairs`.
std::vector<WeightedEdge> score_pairs(const std::vector<std::pair<std::string, std::string>>& pairs,
                                      const std::vector<EntityNode>& nodes, const corpus::Corpus& corpus,
                                      llm::ChatBackend& llm, const ScoreOptions& options = {},
                                      std::size_t workers = 1);

// Drops edges with score < threshold (a score equal to it survives).
EntityGraph build_graph(std::vector<EntityNode> nodes, std::vector<WeightedEdge> edges, double threshold = 0.5);

// One tuple per center with >= k-1 neighbours: the center plus its k-1
// strongest neighbours (ties by id). Unordered duplicates are dropped, first
// emission wins. max_tuples = 0 means no cap.
TupleSet k_tuples(const EntityGraph& graph, std::size_t k, std::size_t max_tuples = 0);

// Pairs by descending mention_count product, ties by (a, b); first `budget`.
std::vector<std::pair<std::string, std::string>> pair_schedule(const std::vector<EntityNode>& nodes,
                                                               std::size_t budget);

void to_json(nlohmann::json& j, const EntityNode& n);
void from_json(const nlohmann::json& j, EntityNode& n);
void to_json(nlohmann::json& j, const WeightedEdge& e);
void from_json(const nlohmann::json& j, WeightedEdge& e);

// JSONL: a {"kind":"graph"} header, node records, then edge records.
void write_graph(const std::filesystem::path& path, const EntityGraph& graph);
EntityGraph read_graph(const std::filesystem::path& path);

void write_tuples(const std::filesystem::path& path, const std::vector<EntityTuple>& tuples);
std::vector<EntityTuple> read_tuples(const std::filesystem::path& path);

}  // namespace cryptosynth::graph
