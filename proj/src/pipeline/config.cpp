#include "cryptosynth/pipeline/config.hpp"

#include <cstdlib>
#include <set>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

namespace cryptosynth::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

std::string expand_env(const std::string& value, const std::string& field) {
  std::string out;
  std::size_t i = 0;
  while (i < value.size()) {
    if (value.compare(i, 2, "${") == 0) {
      const auto close = value.find('}', i + 2);
      if (close == std::string::npos) throw ConfigInvalid(field, "unterminated ${ in value");
      const std::string name = value.substr(i + 2, close - i - 2);
      if (name.empty()) throw ConfigInvalid(field, "empty variable name");
      const char* env = std::getenv(name.c_str());
      if (env == nullptr) throw ConfigInvalid(field, "environment variable " + name + " is not set");
      out += env;
      i = close + 1;
    } else {
      out += value[i++];
    }
  }
  return out;
}

namespace {

json toml_node_to_json(const toml::node& node) {
  if (const auto* t = node.as_table()) {
    json j = json::object();
    for (const auto& [k, v] : *t) j[std::string(k.str())] = toml_node_to_json(v);
    return j;
  }
  if (const auto* a = node.as_array()) {
    json j = json::array();
    for (const auto& v : *a) j.push_back(toml_node_to_json(v));
    return j;
  }
  if (const auto* s = node.as_string()) return s->get();
  if (const auto* i = node.as_integer()) return i->get();
  if (const auto* f = node.as_floating_point()) return f->get();
  if (const auto* b = node.as_boolean()) return b->get();
  throw ConfigInvalid("<toml>", "dates and times are not supported in the config");
}

// Typed access to raw[section][key] with env expansion on strings.
class Reader {
 public:
  Reader(const json& raw, fs::path base) : raw_(raw), base_(std::move(base)) {
    if (!raw_.is_object()) throw ConfigInvalid("<root>", "config must be a table");
    for (const auto& [section, body] : raw_.items()) {
      if (!kSections.count(section)) throw ConfigInvalid(section, "unknown section");
      if (!body.is_object()) throw ConfigInvalid(section, "must be a table");
    }
  }

  const json* find(const std::string& section, const std::string& key) const {
    const auto s = raw_.find(section);
    if (s == raw_.end()) return nullptr;
    const auto k = s->find(key);
    return k == s->end() ? nullptr : &*k;
  }

  std::optional<std::string> str(const std::string& section, const std::string& key) const {
    const auto* v = find(section, key);
    if (!v) return std::nullopt;
    if (!v->is_string()) throw ConfigInvalid(field(section, key), "expected a string");
    return expand_env(v->get<std::string>(), field(section, key));
  }

  std::string str(const std::string& section, const std::string& key, const std::string& fallback) const {
    return str(section, key).value_or(fallback);
  }

  std::optional<fs::path> path(const std::string& section, const std::string& key) const {
    auto s = str(section, key);
    if (!s) return std::nullopt;
    if (s->empty()) throw ConfigInvalid(field(section, key), "empty path");
    fs::path p = *s;
    return p.is_relative() ? (base_ / p).lexically_normal() : p;
  }

  std::size_t count(const std::string& section, const std::string& key, std::size_t fallback, std::size_t lo,
                    std::size_t hi) const {
    const auto* v = find(section, key);
    if (!v) return fallback;
    if (!v->is_number_integer()) throw ConfigInvalid(field(section, key), "expected an integer");
    const auto n = v->get<long long>();
    if (n < static_cast<long long>(lo) || n > static_cast<long long>(hi)) {
      throw ConfigInvalid(field(section, key),
                          "must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "], got " + std::to_string(n));
    }
    return static_cast<std::size_t>(n);
  }

  double real(const std::string& section, const std::string& key, double fallback, double lo, double hi) const {
    const auto* v = find(section, key);
    if (!v) return fallback;
    if (!v->is_number()) throw ConfigInvalid(field(section, key), "expected a number");
    const double d = v->get<double>();
    if (!(d >= lo && d <= hi)) throw ConfigInvalid(field(section, key), "out of range");
    return d;
  }

  bool flag(const std::string& section, const std::string& key, bool fallback) const {
    const auto* v = find(section, key);
    if (!v) return fallback;
    if (!v->is_boolean()) throw ConfigInvalid(field(section, key), "expected true or false");
    return v->get<bool>();
  }

  std::vector<std::string> strings(const std::string& section, const std::string& key) const {
    const auto* v = find(section, key);
    if (!v) return {};
    if (v->is_string()) return {expand_env(v->get<std::string>(), field(section, key))};
    if (!v->is_array()) throw ConfigInvalid(field(section, key), "expected a string array");
    std::vector<std::string> out;
    for (const auto& e : *v) {
      if (!e.is_string()) throw ConfigInvalid(field(section, key), "expected a string array");
      out.push_back(expand_env(e.get<std::string>(), field(section, key)));
    }
    return out;
  }

  std::vector<std::size_t> counts(const std::string& section, const std::string& key) const {
    const auto* v = find(section, key);
    if (!v) return {};
    if (!v->is_array()) throw ConfigInvalid(field(section, key), "expected an integer array");
    std::vector<std::size_t> out;
    for (const auto& e : *v) {
      if (!e.is_number_unsigned()) throw ConfigInvalid(field(section, key), "expected positive integers");
      out.push_back(e.get<std::size_t>());
    }
    return out;
  }

  static std::string field(const std::string& section, const std::string& key) { return section + "." + key; }

 private:
  inline static const std::set<std::string> kSections = {"paths", "crypto", "detect",  "graph",
                                                         "synthesis", "backend", "rag", "audit"};
  const json& raw_;
  fs::path base_;
};

std::size_t clamp_workers(std::size_t n) { return n == 0 ? 1 : n; }

}  // namespace

json PipelineConfig::toml_to_json(const fs::path& path) {
  try {
    const auto table = toml::parse_file(path.string());
    return toml_node_to_json(table);
  } catch (const toml::parse_error& e) {
    const auto& src = e.source();
    throw ConfigInvalid("<toml>", path.string() + ":" + std::to_string(src.begin.line) + ": " +
                                      std::string(e.description()));
  }
}

PipelineConfig PipelineConfig::load_toml(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigInvalid("<config>", "no such file: " + path.string());
  return from_json(toml_to_json(path), fs::absolute(path).parent_path());
}

PipelineConfig PipelineConfig::from_json(const json& raw, const fs::path& base_dir) {
  PipelineConfig c;
  c.raw = raw;
  c.base_dir = base_dir;
  const Reader r(raw, base_dir);

  c.paths.corpus = r.path("paths", "corpus").value_or(fs::path{});
  c.paths.out = r.path("paths", "out").value_or(base_dir / c.paths.out);
  c.paths.prompts = r.path("paths", "prompts");
  c.paths.recognizers = r.path("paths", "recognizers");
  c.paths.review = r.path("paths", "review");
  c.paths.mcq = r.path("paths", "mcq");
  c.paths.responses = r.path("paths", "responses");
  c.paths.filter_rules = r.path("paths", "filter_rules");

  c.crypto.key_file = r.path("crypto", "key_file").value_or(fs::path{});
  const auto mode = r.str("crypto", "mode", "ecb");
  const auto parsed_mode = detcrypt::parse_cipher_mode(mode);
  if (!parsed_mode) throw ConfigInvalid("crypto.mode", "expected ecb or siv, got '" + mode + "'");
  c.crypto.mode = *parsed_mode;
  c.crypto.casefold = r.flag("crypto", "casefold", false);

  c.detect.sidecar = r.str("detect", "sidecar", "none");
  if (c.detect.sidecar != "none" && c.detect.sidecar != "mock" && c.detect.sidecar != "stdio" &&
      c.detect.sidecar != "http") {
    throw ConfigInvalid("detect.sidecar", "expected none, mock, stdio or http");
  }
  c.detect.sidecar_command = r.strings("detect", "sidecar_command");
  c.detect.sidecar_url = r.str("detect", "sidecar_url", "");
  c.detect.gazetteer = r.path("detect", "gazetteer");
  c.detect.workers = clamp_workers(r.count("detect", "workers", 1, 0, 256));
  if (c.detect.sidecar == "stdio" && c.detect.sidecar_command.empty()) {
    throw ConfigInvalid("detect.sidecar_command", "required when sidecar = \"stdio\"");
  }
  if (c.detect.sidecar == "http" && c.detect.sidecar_url.empty()) {
    throw ConfigInvalid("detect.sidecar_url", "required when sidecar = \"http\"");
  }
  if (c.detect.sidecar == "mock" && !c.detect.gazetteer) {
    throw ConfigInvalid("detect.gazetteer", "required when sidecar = \"mock\"");
  }

  c.graph.threshold = r.real("graph", "threshold", 0.5, 0.0, 1.0);
  c.graph.k_max = r.count("graph", "k_max", 4, 2, 64);
  c.graph.pair_budget = r.count("graph", "pair_budget", 200, 1, 10'000'000);
  c.graph.max_tuples = r.count("graph", "max_tuples", 0, 0, 10'000'000);
  c.graph.context_chars = r.count("graph", "context_chars", 6000, 64, 1'000'000);
  c.graph.llm_extract = r.flag("graph", "llm_extract", false);
  c.graph.workers = clamp_workers(r.count("graph", "workers", 4, 0, 256));

  c.synth.budget_tokens = r.count("synthesis", "budget_tokens", 3000, 1, 1'000'000'000'000);
  c.synth.avg_record_tokens = r.count("synthesis", "avg_record_tokens", synthesis::kDefaultRecordTokens, 1, 1'000'000);
  const auto smode = r.str("synthesis", "mode", "enc-first");
  const auto parsed_smode = synthesis::parse_synth_mode(smode);
  if (!parsed_smode) throw ConfigInvalid("synthesis.mode", "expected enc-first or enc-after, got '" + smode + "'");
  c.synth.mode = *parsed_smode;
  if (const auto kinds = r.strings("synthesis", "kind"); !kinds.empty()) {
    c.synth.kinds.clear();
    for (const auto& k : kinds) {
      const auto parsed = synthesis::parse_record_kind(k);
      if (!parsed) throw ConfigInvalid("synthesis.kind", "expected qa or relation, got '" + k + "'");
      c.synth.kinds.push_back(*parsed);
    }
  }
  c.synth.min_length = r.count("synthesis", "min_length", 20, 0, 1'000'000);
  c.synth.workers = clamp_workers(r.count("synthesis", "workers", 4, 0, 256));

  c.backend.kind = r.str("backend", "kind", "mock");
  if (c.backend.kind != "mock" && c.backend.kind != "http") throw ConfigInvalid("backend.kind", "expected mock or http");
  c.backend.base_url = r.str("backend", "base_url", "");
  c.backend.api_key = r.str("backend", "api_key", "");
  c.backend.model = r.str("backend", "model", "");
  c.backend.embed_model = r.str("backend", "embed_model", "");
  c.backend.rerank_model = r.str("backend", "rerank_model", "");
  c.backend.embedder = r.str("backend", "embedder", c.backend.kind == "mock" ? "hash" : "backend");
  if (c.backend.embedder != "backend" && c.backend.embedder != "sidecar" && c.backend.embedder != "hash") {
    throw ConfigInvalid("backend.embedder", "expected backend, sidecar or hash");
  }
  c.backend.mock_answers = r.str("backend", "mock_answers", "oracle");
  if (c.backend.mock_answers != "oracle" && c.backend.mock_answers != "first" &&
      c.backend.mock_answers != "gibberish") {
    throw ConfigInvalid("backend.mock_answers", "expected oracle, first or gibberish");
  }
  if (const auto* s = r.find("backend", "sampling")) {
    if (!s->is_object()) throw ConfigInvalid("backend.sampling", "expected a table");
    c.backend.sampling = *s;
  }
  c.backend.max_retries = static_cast<int>(r.count("backend", "max_retries", 3, 0, 20));
  c.backend.max_in_flight = r.count("backend", "max_in_flight", 4, 0, 1024);
  c.backend.requests_per_minute = r.count("backend", "requests_per_minute", 0, 0, 1'000'000);
  c.backend.timeout_s = r.real("backend", "timeout", 60.0, 1.0, 3600.0);
  c.backend.audit_log = r.path("backend", "audit_log");
  if (c.backend.kind == "http") {
    if (c.backend.base_url.empty()) throw ConfigInvalid("backend.base_url", "required for the http backend");
    if (c.backend.model.empty()) throw ConfigInvalid("backend.model", "required for the http backend");
  }

  c.rag.chunk_size = r.count("rag", "chunk_size", 1024, 16, 1'000'000);
  c.rag.top_k = r.count("rag", "top_k", 4, 1, 1024);
  c.rag.retrieve_k = r.count("rag", "retrieve_k", 0, 0, 100'000);
  if (c.rag.retrieve_k != 0 && c.rag.retrieve_k < c.rag.top_k) {
    throw ConfigInvalid("rag.retrieve_k", "must be 0 or at least rag.top_k");
  }
  c.rag.sweep = r.flag("rag", "sweep", false);
  c.rag.index_corpus = r.str("rag", "corpus", "encrypted");
  if (c.rag.index_corpus != "encrypted" && c.rag.index_corpus != "synthetic" && c.rag.index_corpus != "original") {
    throw ConfigInvalid("rag.corpus", "expected encrypted, synthetic or original");
  }
  c.rag.encrypt_questions = r.flag("rag", "encrypt_questions", true);
  for (const auto& t : r.strings("rag", "question_types")) {
    const auto parsed = parse_entity_type(t);
    if (!parsed) throw ConfigInvalid("rag.question_types", "unknown entity type '" + t + "'");
    c.rag.question_types.push_back(*parsed);
  }
  c.rag.sweep_chunk_sizes = r.counts("rag", "sweep_chunk_sizes");
  if (c.rag.sweep_chunk_sizes.empty()) c.rag.sweep_chunk_sizes = {128, 1024};
  c.rag.sweep_top_ks = r.counts("rag", "sweep_top_ks");
  if (c.rag.sweep_top_ks.empty()) c.rag.sweep_top_ks = {2, 4, 8, 16};
  for (auto s : c.rag.sweep_chunk_sizes) {
    if (s < 16) throw ConfigInvalid("rag.sweep_chunk_sizes", "chunk sizes must be at least 16");
  }
  for (auto k : c.rag.sweep_top_ks) {
    if (k == 0) throw ConfigInvalid("rag.sweep_top_ks", "top_k must be positive");
  }
  c.rag.workers = clamp_workers(r.count("rag", "workers", 4, 0, 256));

  c.audit.group_key = r.str("audit", "group_key", "article_id");
  if (c.audit.group_key.empty()) throw ConfigInvalid("audit.group_key", "must not be empty");
  c.audit.recheck_structured = r.flag("audit", "recheck_structured", true);
  return c;
}

void PipelineConfig::override_value(const std::string& section, const std::string& key, const json& value) {
  json next = raw;
  next[section][key] = value;
  *this = from_json(next, base_dir);
}

namespace {

void require_file(const fs::path& p, const std::string& field) {
  if (p.empty()) throw ConfigInvalid(field, "not set");
  if (!fs::exists(p)) throw ConfigInvalid(field, "no such file: " + p.string());
}

}  // namespace

void PipelineConfig::validate_for(const std::string& stage) const {
  static const std::set<std::string> keyed = {"encrypt", "synth", "decrypt", "audit-hallucination", "rag-eval",
                                              "pipeline"};
  static const std::set<std::string> corpus_read = {"detect", "review", "encrypt", "synth", "rag-eval", "pipeline"};
  if (corpus_read.count(stage)) require_file(paths.corpus, "paths.corpus");
  if (keyed.count(stage)) require_file(crypto.key_file, "crypto.key_file");
  if (paths.recognizers) require_file(*paths.recognizers, "paths.recognizers");
  if (detect.gazetteer) require_file(*detect.gazetteer, "detect.gazetteer");
  if (paths.prompts && !fs::is_directory(*paths.prompts)) {
    throw ConfigInvalid("paths.prompts", "not a directory: " + paths.prompts->string());
  }
  if (paths.filter_rules) require_file(*paths.filter_rules, "paths.filter_rules");
  if (stage == "review" && paths.review) require_file(*paths.review, "paths.review");
  if (stage == "audit-hallucination" || (stage == "pipeline" && paths.responses)) {
    if (!paths.responses) throw ConfigInvalid("paths.responses", "not set");
    require_file(*paths.responses, "paths.responses");
  }
  if (stage == "rag-eval" || (stage == "pipeline" && paths.mcq)) {
    if (!paths.mcq) throw ConfigInvalid("paths.mcq", "not set");
    require_file(*paths.mcq, "paths.mcq");
  }
  if (backend.kind == "http" && backend.embedder == "sidecar" && detect.sidecar == "none") {
    throw ConfigInvalid("backend.embedder", "sidecar embeddings need detect.sidecar");
  }
}

}  // namespace cryptosynth::pipeline
