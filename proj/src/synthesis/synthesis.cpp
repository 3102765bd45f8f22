#include "cryptosynth/synthesis/synthesis.hpp"

#include <algorithm>
#include <stdexcept>

#include "cryptosynth/common/io.hpp"
#include "cryptosynth/common/parallel.hpp"
#include "cryptosynth/common/unicode.hpp"

namespace cryptosynth::synthesis {

std::string_view to_string(RecordKind k) noexcept {
  return k == RecordKind::QaPair ? "qa_pair" : "relation_analysis";
}

std::optional<RecordKind> parse_record_kind(std::string_view s) noexcept {
  if (s == "qa_pair" || s == "qa") return RecordKind::QaPair;
  if (s == "relation_analysis" || s == "relation") return RecordKind::RelationAnalysis;
  return std::nullopt;
}

std::string_view to_string(SynthMode m) noexcept {
  return m == SynthMode::EncryptFirst ? "enc-first" : "enc-after";
}

std::optional<SynthMode> parse_synth_mode(std::string_view s) noexcept {
  if (s == "enc-first") return SynthMode::EncryptFirst;
  if (s == "enc-after") return SynthMode::EncryptAfter;
  return std::nullopt;
}

void to_json(nlohmann::json& j, const SynthRecord& r) {
  j = {{"record_id", r.record_id},
       {"kind", to_string(r.kind)},
       {"tuple", r.tuple.members},
       {"text", r.text},
       {"source_doc_ids", r.source_doc_ids},
       {"backend_meta", r.backend_meta},
       {"accepted", r.accepted},
       {"reject_reason", r.reject_reason ? nlohmann::json(*r.reject_reason) : nlohmann::json(nullptr)}};
}

void from_json(const nlohmann::json& j, SynthRecord& r) {
  r.record_id = j.at("record_id").get<std::string>();
  const auto kind = parse_record_kind(j.at("kind").get<std::string>());
  if (!kind) throw std::invalid_argument("unknown record kind");
  r.kind = *kind;
  r.tuple.members = j.at("tuple").get<std::vector<std::string>>();
  r.text = j.at("text").get<std::string>();
  r.source_doc_ids = j.at("source_doc_ids").get<std::vector<std::string>>();
  r.backend_meta = j.value("backend_meta", std::map<std::string, std::string>{});
  r.accepted = j.at("accepted").get<bool>();
  r.reject_reason.reset();
  if (j.contains("reject_reason") && !j["reject_reason"].is_null()) r.reject_reason = j["reject_reason"].get<std::string>();
  if (!r.accepted && !r.reject_reason) throw std::invalid_argument("rejected record without reject_reason");
}

PromptSet PromptSet::resolve(const std::optional<std::filesystem::path>& dir) {
  return {PromptTemplate::resolve("qa_pair", dir), PromptTemplate::resolve("relation_analysis", dir)};
}

SynthPlan plan(std::size_t budget_tokens, std::vector<graph::EntityTuple> tuples, std::size_t avg_record_tokens,
               PromptSet prompts) {
  if (tuples.empty()) throw EmptyTupleSet();
  if (budget_tokens == 0) throw std::invalid_argument("budget_tokens must be positive");
  if (avg_record_tokens == 0) throw std::invalid_argument("avg_record_tokens must be positive");
  const std::size_t per_round = tuples.size() * avg_record_tokens;
  SynthPlan p;
  p.budget_tokens = budget_tokens;
  p.per_tuple_records = std::max<std::size_t>(1, (budget_tokens + per_round - 1) / per_round);
  p.tuples = std::move(tuples);
  p.prompts = std::move(prompts);
  return p;
}

std::vector<SynthRecord> synth_for_tuple(std::size_t tuple_index, const graph::EntityTuple& tuple,
                                         const std::vector<const corpus::Document*>& context, RecordKind kind,
                                         llm::ChatBackend& llm, const PromptTemplate& prompt,
                                         const SynthOptions& options) {
  std::string entities;
  for (const auto& m : tuple.members) entities += "- " + m + "\n";
  std::string title;
  if (!context.empty()) {
    if (auto it = context.front()->meta.find("title"); it != context.front()->meta.end()) title = it->second;
  }
  const std::string text = prompt.render(
      {{"title", title}, {"entities", entities}, {"context", graph::render_context(context, options.context_chars)}});

  std::vector<std::string> sources;
  for (const auto* d : context) sources.push_back(d->doc_id);
  const std::string tag = "synth." + std::string(to_string(kind));

  std::vector<SynthRecord> out;
  for (std::size_t seq = 0; seq < options.records; ++seq) {
    auto req = llm::ChatRequest::user(text, tag);
    req.sampling = options.sampling;
    std::string completion;
    try {
      completion = llm.chat(req);
    } catch (const llm::BackendFailure& e) {
      throw TupleFailure(tuple_index, e);
    }
    SynthRecord r;
    r.record_id = std::string(to_string(kind)) + ":" + std::to_string(tuple_index) + ":" + std::to_string(seq);
    r.kind = kind;
    r.tuple = tuple;
    r.text = std::move(completion);
    r.source_doc_ids = sources;
    r.backend_meta = {{"backend", llm.name()}, {"prompt", prompt.name()}, {"tag", tag},
                      {"sampling", options.sampling.dump()}};
    r.reject_reason = "unfiltered";
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<const corpus::Document*> tuple_context(const graph::EntityTuple& tuple,
                                                   const std::vector<graph::EntityNode>& nodes,
                                                   const corpus::Corpus& corpus) {
  std::set<std::string> ids;
  for (const auto& m : tuple.members) {
    auto it = std::find_if(nodes.begin(), nodes.end(), [&](const graph::EntityNode& n) { return n.entity_id == m; });
    if (it != nodes.end()) ids.insert(it->doc_refs.begin(), it->doc_refs.end());
  }
  std::vector<const corpus::Document*> out;
  for (const auto& d : corpus.documents()) {
    if (ids.count(d.doc_id)) out.push_back(&d);
  }
  return out;
}

std::vector<SynthRecord> run_synthesis(const SynthPlan& plan, RecordKind kind,
                                       const std::vector<graph::EntityNode>& nodes, const corpus::Corpus& corpus,
                                       llm::ChatBackend& llm, std::size_t workers, SynthOptions options) {
  options.records = plan.per_tuple_records;
  std::vector<std::vector<SynthRecord>> per_tuple(plan.tuples.size());
  parallel_for(plan.tuples.size(), workers, [&](std::size_t i) {
    per_tuple[i] = synth_for_tuple(i, plan.tuples[i], tuple_context(plan.tuples[i], nodes, corpus), kind, llm,
                                   plan.prompts.for_kind(kind), options);
  });
  std::vector<SynthRecord> out;
  for (auto& batch : per_tuple) std::move(batch.begin(), batch.end(), std::back_inserter(out));
  return out;
}

FilterRules FilterRules::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  FilterRules r;
  r.min_length = j.value("min_length", r.min_length);
  r.question_delimiter = j.value("question_delimiter", r.question_delimiter);
  r.answer_delimiter = j.value("answer_delimiter", r.answer_delimiter);
  r.require_entities = j.value("require_entities", r.require_entities);
  if (j.contains("inventory") && !j["inventory"].is_null()) {
    std::filesystem::path p = j["inventory"].get<std::string>();
    if (p.is_relative()) p = base_dir / p;
    r.inventory = std::make_shared<const audit::PlaintextInventory>(audit::PlaintextInventory::load(p));
  }
  return r;
}

FilterRules FilterRules::load(const std::filesystem::path& path) {
  return from_json(io::read_json(path), path.parent_path());
}

namespace {

std::optional<std::string> first_failure(const SynthRecord& r, const FilterRules& rules) {
  if (r.text.empty() || unicode::codepoint_length(unicode::trim(r.text)) < rules.min_length) return "too_short";
  if (r.kind == RecordKind::QaPair) {
    const auto q = r.text.find(rules.question_delimiter);
    if (q == std::string::npos) return "missing_question_segment";
    const auto a = r.text.find(rules.answer_delimiter, q + rules.question_delimiter.size());
    if (a == std::string::npos) return "missing_answer_segment";
  }
  if (rules.require_entities) {
    for (const auto& m : r.tuple.members) {
      if (r.text.find(m) == std::string::npos) return "missing_entity";
    }
  }
  if (rules.inventory && !audit::plaintext_hits(r.text, *rules.inventory).empty()) return "plaintext_pii";
  return std::nullopt;
}

}  // namespace

std::pair<std::vector<SynthRecord>, std::vector<SynthRecord>> filter_records(const std::vector<SynthRecord>& records,
                                                                             const FilterRules& rules) {
  std::vector<SynthRecord> kept, rejected;
  for (const auto& r : records) {
    SynthRecord out = r;
    out.reject_reason = first_failure(r, rules);
    out.accepted = !out.reject_reason;
    (out.accepted ? kept : rejected).push_back(std::move(out));
  }
  return {std::move(kept), std::move(rejected)};
}

corpus::Corpus emit_corpus(const std::vector<SynthRecord>& kept, const std::filesystem::path& path) {
  std::vector<corpus::Document> docs;
  for (const auto& r : kept) {
    if (!r.accepted) throw std::invalid_argument("emit_corpus got unaccepted record '" + r.record_id + "'");
    corpus::Document d;
    d.doc_id = r.record_id;
    d.text = r.text;
    d.source = corpus::Source::Synthetic;
    d.parent_ids = r.source_doc_ids;
    d.meta = {{"kind", std::string(to_string(r.kind))}, {"tuple", nlohmann::json(r.tuple.members).dump()}};
    docs.push_back(std::move(d));
  }
  corpus::Corpus c(std::move(docs));
  corpus::persist(c, path);
  return c;
}

void write_records(const std::filesystem::path& path, const std::vector<SynthRecord>& records) {
  std::vector<nlohmann::json> lines(records.begin(), records.end());
  io::write_jsonl(path, lines);
}

std::vector<SynthRecord> read_records(const std::filesystem::path& path) {
  std::vector<SynthRecord> out;
  std::size_t line_no = 0;
  for (const auto& line : io::split_lines(io::read_file(path))) {
    ++line_no;
    if (unicode::trim(line).empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<SynthRecord>());
    } catch (const std::exception& e) {
      throw corpus::MalformedRecord(line_no, e.what());
    }
  }
  return out;
}

}  // namespace cryptosynth::synthesis
