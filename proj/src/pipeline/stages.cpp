#include "cryptosynth/pipeline/stages.hpp"

#include <algorithm>
#include <map>
#include <memory>
#include <set>

#include <openssl/opensslv.h>

#include "cryptosynth/audit/audit.hpp"
#include "cryptosynth/common/io.hpp"
#include "cryptosynth/common/parallel.hpp"
#include "cryptosynth/corpus/corpus.hpp"
#include "cryptosynth/detcrypt/cipher.hpp"
#include "cryptosynth/graph/graph.hpp"
#include "cryptosynth/llm/http.hpp"
#include "cryptosynth/llm/mock.hpp"
#include "cryptosynth/pii/merge.hpp"
#include "cryptosynth/pii/recognizers.hpp"
#include "cryptosynth/pii/sidecar.hpp"
#include "cryptosynth/pipeline/demo.hpp"
#include "cryptosynth/rag/rag.hpp"
#include "cryptosynth/synthesis/synthesis.hpp"

#ifndef CS_VERSION
#define CS_VERSION "0.0.0"
#endif

namespace cryptosynth::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {"detect",        "review",          "encrypt",
                                                 "graph",         "tuples",          "synth",
                                                 "decrypt",       "audit-leakage",   "audit-hallucination",
                                                 "rag-eval"};
  return names;
}

bool is_stage(const std::string& name) {
  const auto& n = stage_names();
  return name == "pipeline" || std::find(n.begin(), n.end(), name) != n.end();
}

json RunOptions::to_json() const {
  json j = json::object();
  if (decrypt_input) j["decrypt_input"] = decrypt_input->string();
  if (leakage_target) j["leakage_target"] = leakage_target->string();
  if (leakage_inventory) j["leakage_inventory"] = leakage_inventory->string();
  return j;
}

RunOptions RunOptions::from_json(const json& j) {
  RunOptions o;
  if (j.contains("decrypt_input")) o.decrypt_input = j["decrypt_input"].get<std::string>();
  if (j.contains("leakage_target")) o.leakage_target = j["leakage_target"].get<std::string>();
  if (j.contains("leakage_inventory")) o.leakage_inventory = j["leakage_inventory"].get<std::string>();
  return o;
}

json redact_config(const json& raw) {
  static const std::set<std::string> secret_keys = {"api_key", "token", "password", "secret"};
  json out = raw;
  for (auto& [section, body] : out.items()) {
    if (!body.is_object()) continue;
    for (auto& [key, value] : body.items()) {
      if (!secret_keys.count(key) || !value.is_string()) continue;
      const auto s = value.get<std::string>();
      const bool reference = s.size() > 3 && s.rfind("${", 0) == 0 && s.back() == '}';
      if (!reference && !s.empty()) value = "[REDACTED]";
    }
  }
  return out;
}

std::string config_hash(const json& raw) { return io::sha256_hex(raw.dump()); }

namespace {

std::string rel(const fs::path& p, const fs::path& base) { return fs::proximate(p, base).generic_string(); }

bool inside(const fs::path& p, const fs::path& dir) {
  const auto r = rel(p, dir);
  return !r.empty() && r.rfind("..", 0) != 0;
}

// Paths under `out` are keyed "$out/<relative>", everything else relative to `base`.
std::string path_key(const fs::path& p, const fs::path& base, const fs::path& out) {
  return inside(p, out) ? "$out/" + rel(p, out) : rel(p, base);
}

json hash_paths(const std::vector<fs::path>& paths, const fs::path& base, const fs::path& out) {
  json j = json::object();
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::recursive_directory_iterator(p)) {
        if (e.is_regular_file()) files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) j[path_key(f, base, out)] = io::sha256_hex(io::read_file(f));
    } else if (fs::exists(p)) {
      j[path_key(p, base, out)] = io::sha256_hex(io::read_file(p));
    }
  }
  return j;
}

json versions() {
  return {{"cryptosynth", CS_VERSION},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
          {"tomlplusplus", "3.3.0"},
          {"openssl", OPENSSL_VERSION_TEXT}};
}

corpus::Corpus load_corpus(const fs::path& p) {
  return corpus::ingest(p, fs::is_directory(p) ? corpus::IngestKind::PlainDir : corpus::IngestKind::Jsonl);
}

void require_output(const fs::path& p, const std::string& producer) {
  if (!fs::exists(p)) {
    throw Error("MissingInput", p.filename().string() + " not found; run '" + producer + "' first");
  }
}

}  // namespace

json build_manifest(const PipelineConfig& config, const RunOptions& options, const StageResult& result) {
  json m;
  m["stage"] = result.stage;
  m["config_sha256"] = config_hash(config.raw);
  m["config"] = redact_config(config.raw);
  m["config_dir"] = rel(config.base_dir, config.paths.out);
  m["options"] = options.to_json();
  m["inputs"] = hash_paths(result.inputs, config.base_dir, config.paths.out);
  m["outputs"] = hash_paths(result.outputs, config.base_dir, config.paths.out);
  m["summary"] = result.summary;
  m["versions"] = versions();
  return m;
}

// Stage implementations share the loaded config and a few lazily built helpers.
class StageContext {
 public:
  StageContext(const PipelineConfig& cfg, const RunOptions& opts) : cfg_(cfg), opts_(opts) {}

  fs::path out(const std::string& name) const { return cfg_.paths.out / name; }

  const detcrypt::EntityCipher& cipher() {
    if (!cipher_) {
      auto key = detcrypt::KeyMaterial::from_hex_file(cfg_.crypto.key_file);
      cipher_ = std::make_unique<detcrypt::EntityCipher>(std::move(key), cfg_.crypto.mode,
                                                        detcrypt::CanonicalOptions{cfg_.crypto.casefold});
    }
    return *cipher_;
  }

  const pii::RecognizerSet& recognizers() {
    if (!recognizers_) {
      recognizers_ = std::make_unique<pii::RecognizerSet>(
          cfg_.paths.recognizers ? pii::RecognizerSet::load(*cfg_.paths.recognizers) : pii::RecognizerSet::defaults());
    }
    return *recognizers_;
  }

  // Null when detect.sidecar = "none".
  std::shared_ptr<pii::SidecarClient> sidecar() {
    if (sidecar_ || cfg_.detect.sidecar == "none") return sidecar_;
    const auto& d = cfg_.detect;
    if (d.sidecar == "mock") {
      auto mock = std::make_shared<pii::MockSidecar>(pii::MockSidecar::from_gazetteer_file(*d.gazetteer));
      sidecar_ = std::make_shared<pii::InProcessSidecarClient>([mock](const json& req) { return mock->handle(req); });
    } else if (d.sidecar == "stdio") {
      sidecar_ = std::make_shared<pii::StdioSidecarClient>(d.sidecar_command);
    } else {
      sidecar_ = std::make_shared<pii::HttpSidecarClient>(d.sidecar_url);
    }
    return sidecar_;
  }

  std::shared_ptr<llm::HttpEndpoint> endpoint(const std::string& model) {
    const auto& b = cfg_.backend;
    if (b.audit_log && !audit_) {
      audit_ = std::make_shared<llm::AuditLog>(*b.audit_log);
      if (!b.api_key.empty()) audit_->add_secret(b.api_key);
    }
    llm::HttpBackendConfig hc;
    hc.base_url = b.base_url;
    hc.api_key = b.api_key;
    hc.model = model;
    hc.sampling_defaults = b.sampling;
    hc.retry.max_retries = b.max_retries;
    hc.max_in_flight = b.max_in_flight;
    hc.requests_per_minute = b.requests_per_minute;
    const auto timeout = std::chrono::seconds(static_cast<long>(b.timeout_s));
    return std::make_shared<llm::HttpEndpoint>(std::move(hc), llm::default_http_post(timeout), audit_);
  }

  // `gold` feeds the mock answerer; ignored by the http backend.
  std::shared_ptr<llm::ChatBackend> chat(std::map<std::string, char> gold = {}) {
    if (cfg_.backend.kind == "mock") return demo_chat_backend(cfg_.backend.mock_answers, std::move(gold));
    if (!http_chat_) http_chat_ = std::make_shared<llm::HttpChatBackend>(endpoint(cfg_.backend.model));
    return http_chat_;
  }

  llm::Backends rag_backends(std::map<std::string, char> gold) {
    llm::Backends b;
    b.chat = chat(std::move(gold));
    const auto& be = cfg_.backend;
    if (be.embedder == "hash") {
      b.embedder = std::make_shared<llm::HashEmbedder>();
    } else if (be.embedder == "sidecar") {
      auto client = sidecar();
      if (!client) throw ConfigInvalid("backend.embedder", "sidecar embeddings need detect.sidecar");
      b.embedder = std::make_shared<pii::SidecarEmbedder>(client);
    } else {
      b.embedder = std::make_shared<llm::HttpEmbedder>(endpoint(be.embed_model.empty() ? be.model : be.embed_model));
    }
    if (be.kind == "http" && !be.rerank_model.empty()) {
      b.reranker = std::make_shared<llm::HttpReranker>(endpoint(be.rerank_model));
    } else {
      b.reranker = std::make_shared<llm::OverlapReranker>();
    }
    return b;
  }

  const PipelineConfig& cfg() const { return cfg_; }
  const RunOptions& opts() const { return opts_; }

 private:
  const PipelineConfig& cfg_;
  const RunOptions& opts_;
  std::unique_ptr<detcrypt::EntityCipher> cipher_;
  std::unique_ptr<pii::RecognizerSet> recognizers_;
  std::shared_ptr<pii::SidecarClient> sidecar_;
  std::shared_ptr<llm::AuditLog> audit_;
  std::shared_ptr<llm::ChatBackend> http_chat_;
};

namespace {

json type_counts(const std::map<EntityType, std::size_t>& counts) {
  json j = json::object();
  for (const auto& [t, n] : counts) j[std::string(to_string(t))] = n;
  return j;
}

// Regex plus sidecar spans for every document, merged per document.
std::pair<pii::SpanMap, std::size_t> detect_all(const corpus::Corpus& corpus, const pii::RecognizerSet& recognizers,
                                                pii::SidecarClient* sidecar, std::size_t workers) {
  const auto& docs = corpus.documents();
  std::vector<std::vector<EntitySpan>> per_doc(docs.size());
  std::vector<std::size_t> dropped(docs.size(), 0);
  parallel_for(docs.size(), workers, [&](std::size_t i) {
    auto spans = pii::detect_regex(docs[i], recognizers);
    if (sidecar) {
      auto found = pii::detect_sidecar(docs[i], *sidecar);
      dropped[i] = found.dropped;
      spans.insert(spans.end(), found.spans.begin(), found.spans.end());
    }
    per_doc[i] = pii::merge_spans(spans);
  });
  pii::SpanMap out;
  std::size_t total_dropped = 0;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    out[docs[i].doc_id] = std::move(per_doc[i]);
    total_dropped += dropped[i];
  }
  return {std::move(out), total_dropped};
}

StageResult stage_detect(StageContext& ctx) {
  const auto& cfg = ctx.cfg();
  StageResult r{"detect"};
  const auto corpus = load_corpus(cfg.paths.corpus);
  auto sidecar = ctx.sidecar();
  auto [spans, dropped] = detect_all(corpus, ctx.recognizers(), sidecar.get(), cfg.detect.workers);
  pii::validate_spans(corpus, spans);
  pii::write_spans(ctx.out(files::kSpans), corpus, spans);
  pii::export_review(corpus, spans, ctx.out(files::kReviewExport));

  std::map<EntityType, std::size_t> per_type;
  std::size_t total = 0;
  for (const auto& [id, list] : spans) {
    for (const auto& s : list) ++per_type[s.entity_type], ++total;
  }
  r.summary = {{"documents", corpus.size()}, {"spans", total}, {"per_type", type_counts(per_type)},
               {"sidecar", cfg.detect.sidecar}, {"sidecar_dropped", dropped}};
  r.inputs = {cfg.paths.corpus};
  if (cfg.paths.recognizers) r.inputs.push_back(*cfg.paths.recognizers);
  if (cfg.detect.gazetteer) r.inputs.push_back(*cfg.detect.gazetteer);
  r.outputs = {ctx.out(files::kSpans), ctx.out(files::kReviewExport)};
  return r;
}

StageResult stage_review(StageContext& ctx) {
  const auto& cfg = ctx.cfg();
  StageResult r{"review"};
  const auto source = cfg.paths.review.value_or(ctx.out(files::kReviewExport));
  require_output(source, "detect");
  const auto corpus = load_corpus(cfg.paths.corpus);
  const auto spans = pii::import_review(source, corpus);
  pii::write_spans(ctx.out(files::kReviewedSpans), corpus, spans);
  std::size_t total = 0;
  for (const auto& [id, list] : spans) total += list.size();
  r.summary = {{"spans", total}, {"source", cfg.paths.review ? "paths.review" : "detect export"}};
  r.inputs = {cfg.paths.corpus, source};
  r.outputs = {ctx.out(files::kReviewedSpans)};
  return r;
}

// Reviewed spans when present, else the raw detection output.
fs::path span_source(StageContext& ctx) {
  const auto reviewed = ctx.out(files::kReviewedSpans);
  if (fs::exists(reviewed)) return reviewed;
  const auto raw = ctx.out(files::kSpans);
  require_output(raw, "detect");
  return raw;
}

StageResult stage_encrypt(StageContext& ctx) {
  const auto& cfg = ctx.cfg();
  StageResult r{"encrypt"};
  const auto corpus = load_corpus(cfg.paths.corpus);
  const auto spans_path = span_source(ctx);
  const auto spans = pii::read_spans(spans_path);
  pii::validate_spans(corpus, spans);
  const auto& cipher = ctx.cipher();

  std::vector<corpus::Document> docs;
  std::size_t tokens = 0;
  static const std::vector<EntitySpan> none;
  for (const auto& d : corpus.documents()) {
    const auto it = spans.find(d.doc_id);
    auto [enc, toks] = detcrypt::rewrite_encrypt(d, it == spans.end() ? none : it->second, cipher);
    tokens += toks.size();
    docs.push_back(std::move(enc));
  }
  const corpus::Corpus encrypted(std::move(docs));
  corpus::persist(encrypted, ctx.out(files::kEncrypted));
  const auto inventory = audit::PlaintextInventory::from_spans(spans, cipher.canonical());
  inventory.save(ctx.out(files::kInventory));

  r.summary = {{"documents", encrypted.size()},
               {"tokens", tokens},
               {"inventory_entries", inventory.entries().size()},
               {"inventory_surfaces", inventory.surfaces().size()},
               {"mode", std::string(detcrypt::to_string(cipher.mode()))},
               {"key_id", cipher.key().key_id()}};
  r.inputs = {cfg.paths.corpus, spans_path, cfg.crypto.key_file};
  r.outputs = {ctx.out(files::kEncrypted), ctx.out(files::kInventory)};
  return r;
}

StageResult stage_graph(StageContext& ctx) {
  const auto& cfg = ctx.cfg();
  StageResult r{"graph"};
  const auto enc_path = ctx.out(files::kEncrypted);
  require_output(enc_path, "encrypt");
  const auto encrypted = corpus::ingest(enc_path);
  auto chat = ctx.chat();

  graph::ExtractOptions eo;
  if (cfg.graph.llm_extract) eo.llm = chat.get();
  eo.prompt = PromptTemplate::resolve("extract", cfg.paths.prompts);
  eo.context_chars = cfg.graph.context_chars;
  eo.casefold = cfg.crypto.casefold;
  auto nodes = graph::extract_entities(encrypted, graph::cipher_token_spans(encrypted), eo);

  const auto pairs = graph::pair_schedule(nodes, cfg.graph.pair_budget);
  graph::ScoreOptions so;
  so.prompt = PromptTemplate::resolve("association", cfg.paths.prompts);
  so.context_chars = cfg.graph.context_chars;
  auto edges = graph::score_pairs(pairs, nodes, encrypted, *chat, so, cfg.graph.workers);
  const auto g = graph::build_graph(std::move(nodes), std::move(edges), cfg.graph.threshold);
  graph::write_graph(ctx.out(files::kGraph), g);

  r.summary = {{"nodes", g.n()}, {"scored_pairs", pairs.size()}, {"edges", g.edges.size()},
               {"threshold", g.threshold}};
  r.inputs = {enc_path};
  if (cfg.paths.prompts) r.inputs.push_back(*cfg.paths.prompts);
  r.outputs = {ctx.out(files::kGraph)};
  return r;
}

StageResult stage_tuples(StageContext& ctx) {
  const auto& cfg = ctx.cfg();
  StageResult r{"tuples"};
  const auto graph_path = ctx.out(files::kGraph);
  require_output(graph_path, "graph");
  const auto g = graph::read_graph(graph_path);
  std::vector<graph::EntityTuple> all;
  json per_k = json::object();
  for (std::size_t k = 2; k <= cfg.graph.k_max; ++k) {
    auto set = graph::k_tuples(g, k, cfg.graph.max_tuples);
    per_k[std::to_string(k)] = {{"tuples", set.tuples.size()}, {"skipped", set.skipped}};
    std::move(set.tuples.begin(), set.tuples.end(), std::back_inserter(all));
  }
  graph::write_tuples(ctx.out(files::kTuples), all);
  r.summary = {{"tuples", all.size()}, {"per_k", per_k}, {"k_max", cfg.graph.k_max}};
  r.inputs = {graph_path};
  r.outputs = {ctx.out(files::kTuples)};
  return r;
}

// Encrypts the PII of a plaintext record: regex hits plus known inventory surfaces.
std::string encrypt_record_text(const std::string& record_id, const std::string& text,
                                const pii::RecognizerSet& recognizers, pii::SidecarClient& gazetteer,
                                const detcrypt::EntityCipher& cipher) {
  corpus::Document d;
  d.doc_id = record_id;
  d.text = text;
  auto spans = pii::detect_regex(d, recognizers);
  auto found = pii::detect_sidecar(d, gazetteer);
  spans.insert(spans.end(), found.spans.begin(), found.spans.end());
  return detcrypt::rewrite_encrypt(d, pii::merge_spans(spans), cipher).first.text;
}

StageResult stage_synth(StageContext& ctx) {
  const auto& cfg = ctx.cfg();
  StageResult r{"synth"};
  const auto graph_path = ctx.out(files::kGraph);
  const auto tuples_path = ctx.out(files::kTuples);
  const auto enc_path = ctx.out(files::kEncrypted);
  const auto inv_path = ctx.out(files::kInventory);
  require_output(graph_path, "graph");
  require_output(tuples_path, "tuples");
  require_output(inv_path, "encrypt");
  const auto& cipher = ctx.cipher();
  const auto inventory =
      std::make_shared<const audit::PlaintextInventory>(audit::PlaintextInventory::load(inv_path, cipher.canonical()));

  auto nodes = graph::read_graph(graph_path).nodes;
  auto tuples = graph::read_tuples(tuples_path);
  const auto encrypt_after = cfg.synth.mode == synthesis::SynthMode::EncryptAfter;

  corpus::Corpus source;
  std::vector<graph::EntityTuple> rendered_tuples = tuples;
  if (encrypt_after) {
    // Generation sees plaintext: map every rendering back to its surface.
    std::map<std::string, std::string> plain;
    for (const auto& n : nodes) {
      const auto token = detcrypt::parse_rendering(n.entity_id);
      if (!token) continue;
      const auto out = cipher.decrypt(*token);
      if (!out.ok()) throw Error("DecryptFailure", "graph node " + n.entity_id + " does not decrypt under this key");
      plain[n.entity_id] = *out.plaintext;
    }
    for (auto& n : nodes) {
      if (plain.count(n.entity_id)) n.entity_id = plain[n.entity_id];
    }
    for (auto& t : tuples) {
      for (auto& m : t.members) {
        if (plain.count(m)) m = plain[m];
      }
    }
    source = load_corpus(cfg.paths.corpus);
  } else {
    require_output(enc_path, "encrypt");
    source = corpus::ingest(enc_path);
  }

  synthesis::SynthOptions so;
  so.context_chars = cfg.graph.context_chars;
  so.sampling = cfg.backend.sampling;
  auto chat = ctx.chat();
  const auto prompts = synthesis::PromptSet::resolve(cfg.paths.prompts);
  std::vector<synthesis::SynthRecord> records;
  json per_kind = json::object();
  for (const auto kind : cfg.synth.kinds) {
    const auto p = synthesis::plan(cfg.synth.budget_tokens, tuples, cfg.synth.avg_record_tokens, prompts);
    so.records = p.per_tuple_records;
    auto recs = synthesis::run_synthesis(p, kind, nodes, source, *chat, cfg.synth.workers, so);
    per_kind[std::string(synthesis::to_string(kind))] = {{"per_tuple_records", p.per_tuple_records},
                                                          {"generated", recs.size()}};
    std::move(recs.begin(), recs.end(), std::back_inserter(records));
  }

  if (encrypt_after) {
    std::vector<std::pair<std::string, EntityType>> gazetteer(inventory->surfaces().begin(),
                                                              inventory->surfaces().end());
    const pii::MockSidecar matcher(std::move(gazetteer));
    pii::InProcessSidecarClient client([&matcher](const json& req) { return matcher.handle(req); });
    std::map<std::string, std::string> to_rendering;
    for (const auto& n : graph::read_graph(graph_path).nodes) {
      const auto token = detcrypt::parse_rendering(n.entity_id);
      if (token) to_rendering[*cipher.decrypt(*token).plaintext] = n.entity_id;
    }
    for (auto& rec : records) {
      rec.text = encrypt_record_text(rec.record_id, rec.text, ctx.recognizers(), client, cipher);
      for (auto& m : rec.tuple.members) {
        if (to_rendering.count(m)) m = to_rendering[m];
      }
    }
  }

  synthesis::FilterRules rules;
  if (cfg.paths.filter_rules) {
    rules = synthesis::FilterRules::load(*cfg.paths.filter_rules);
  } else {
    rules.min_length = cfg.synth.min_length;
  }
  // Encrypt-after text is encrypted by detection, so residual plaintext is
  // measured by audit-leakage rather than filtered here.
  if (encrypt_after) {
    rules.inventory = nullptr;
  } else if (!rules.inventory) {
    rules.inventory = inventory;
  }
  auto [kept, rejected] = synthesis::filter_records(records, rules);
  std::map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < records.size(); ++i) position[records[i].record_id] = i;
  std::vector<synthesis::SynthRecord> all = kept;
  all.insert(all.end(), rejected.begin(), rejected.end());
  std::sort(all.begin(), all.end(),
            [&](const auto& a, const auto& b) { return position[a.record_id] < position[b.record_id]; });
  synthesis::write_records(ctx.out(files::kSynthRecords), all);
  synthesis::emit_corpus(kept, ctx.out(files::kSynthetic));

  std::map<std::string, std::size_t> reasons;
  for (const auto& rec : rejected) ++reasons[*rec.reject_reason];
  r.summary = {{"mode", std::string(synthesis::to_string(cfg.synth.mode))},
               {"tuples", tuples.size()},
               {"per_kind", per_kind},
               {"generated", records.size()},
               {"accepted", kept.size()},
               {"rejected", reasons}};
  r.inputs = {graph_path, tuples_path, inv_path, encrypt_after ? cfg.paths.corpus : enc_path, cfg.crypto.key_file};
  if (cfg.paths.prompts) r.inputs.push_back(*cfg.paths.prompts);
  if (cfg.paths.filter_rules) r.inputs.push_back(*cfg.paths.filter_rules);
  r.outputs = {ctx.out(files::kSynthRecords), ctx.out(files::kSynthetic)};
  return r;
}

StageResult stage_decrypt(StageContext& ctx) {
  StageResult r{"decrypt"};
  const auto input = ctx.opts().decrypt_input.value_or(ctx.out(files::kSynthetic));
  require_output(input, "synth");
  const auto source = corpus::ingest(input);
  const auto& cipher = ctx.cipher();
  std::vector<corpus::Document> docs;
  std::map<std::string, std::size_t> statuses;
  for (const auto& d : source.documents()) {
    auto [text, outcomes] = detcrypt::rewrite_decrypt(d.text, cipher);
    for (const auto& o : outcomes) ++statuses[std::string(detcrypt::to_string(o.status))];
    corpus::Document out = d;
    out.text = std::move(text);
    docs.push_back(std::move(out));
  }
  corpus::persist(corpus::Corpus(std::move(docs)), ctx.out(files::kDecrypted));
  r.summary = {{"documents", source.size()}, {"tokens", statuses}};
  io::write_json(ctx.out(files::kDecryptReport), r.summary);
  r.inputs = {input, ctx.cfg().crypto.key_file};
  r.outputs = {ctx.out(files::kDecrypted), ctx.out(files::kDecryptReport)};
  return r;
}

StageResult stage_leakage(StageContext& ctx) {
  const auto& cfg = ctx.cfg();
  StageResult r{"audit-leakage"};
  const auto target = ctx.opts().leakage_target.value_or(ctx.out(files::kSynthetic));
  const auto inv_path = ctx.opts().leakage_inventory.value_or(ctx.out(files::kInventory));
  require_output(target, "synth");
  require_output(inv_path, "encrypt");
  const auto synthetic = corpus::ingest(target);
  const auto inventory =
      audit::PlaintextInventory::load(inv_path, detcrypt::CanonicalOptions{cfg.crypto.casefold});
  audit::LeakageOptions lo;
  if (cfg.audit.recheck_structured) lo.recheck = &ctx.recognizers();
  const auto report = audit::leakage_report(synthetic, inventory, lo);
  io::write_json(ctx.out(files::kLeakage), json(report));
  r.summary = {{"unencrypted", report.total.unencrypted},
               {"encrypted", report.total.encrypted},
               {"ratio", report.total.label()}};
  r.inputs = {target, inv_path};
  r.outputs = {ctx.out(files::kLeakage)};
  return r;
}

StageResult stage_hallucination(StageContext& ctx) {
  const auto& cfg = ctx.cfg();
  StageResult r{"audit-hallucination"};
  if (!cfg.paths.responses) throw ConfigInvalid("paths.responses", "not set");
  const auto enc_path = ctx.out(files::kEncrypted);
  require_output(enc_path, "encrypt");
  const auto articles = corpus::ingest(enc_path);
  const auto inventory = audit::build_cipher_inventory(articles, cfg.audit.group_key);
  const auto responses = audit::read_responses(*cfg.paths.responses, cfg.audit.group_key);
  const auto report = audit::hallucination_report(responses, inventory, ctx.cipher());
  io::write_json(ctx.out(files::kHallucination), json(report));
  r.summary = {{"responses", responses.size()},
               {"unique_ciphers", report.unique_ciphers},
               {"unique_failures", report.unique_failures()},
               {"unique_ratio", report.unique_ratio()},
               {"total_ciphers", report.total_ciphers},
               {"total_failures", report.total_failures()}};
  r.inputs = {enc_path, *cfg.paths.responses, cfg.crypto.key_file};
  r.outputs = {ctx.out(files::kHallucination)};
  return r;
}

StageResult stage_rag(StageContext& ctx) {
  const auto& cfg = ctx.cfg();
  StageResult r{"rag-eval"};
  if (!cfg.paths.mcq) throw ConfigInvalid("paths.mcq", "not set");
  auto items = rag::read_mcq(*cfg.paths.mcq);

  fs::path corpus_path;
  if (cfg.rag.index_corpus == "original") {
    corpus_path = cfg.paths.corpus;
  } else {
    corpus_path = ctx.out(cfg.rag.index_corpus == "synthetic" ? files::kSynthetic : files::kEncrypted);
    require_output(corpus_path, cfg.rag.index_corpus == "synthetic" ? "synth" : "encrypt");
  }
  const auto index_corpus = load_corpus(corpus_path);
  r.inputs = {*cfg.paths.mcq, corpus_path};

  std::size_t encrypted_items = 0;
  if (cfg.rag.encrypt_questions && cfg.rag.index_corpus != "original") {
    const auto inv_path = ctx.out(files::kInventory);
    require_output(inv_path, "encrypt");
    const auto& cipher = ctx.cipher();
    auto inventory = audit::PlaintextInventory::load(inv_path, cipher.canonical());
    if (!cfg.rag.question_types.empty()) {
      const std::set<EntityType> keep(cfg.rag.question_types.begin(), cfg.rag.question_types.end());
      std::vector<audit::InventoryEntry> subset;
      for (const auto& e : inventory.entries()) {
        if (keep.count(e.entity_type)) subset.push_back(e);
      }
      inventory = audit::PlaintextInventory(std::move(subset), cipher.canonical());
    }
    for (auto& item : items) {
      if (item.encrypted) continue;
      item = rag::encrypt_item(item, inventory, cipher);
      item.encrypted = true;
      ++encrypted_items;
    }
    r.inputs.push_back(inv_path);
    r.inputs.push_back(cfg.crypto.key_file);
  }

  std::map<std::string, char> gold;
  for (const auto& i : items) gold[i.question] = i.gold;
  const auto backends = ctx.rag_backends(std::move(gold));
  rag::EvalOptions eo;
  eo.workers = cfg.rag.workers;
  eo.prompt = PromptTemplate::resolve("rag_answer", cfg.paths.prompts);

  if (cfg.rag.sweep) {
    const auto cells = rag::run_sweep(items, index_corpus, cfg.rag.sweep_chunk_sizes, cfg.rag.sweep_top_ks, backends, eo);
    const auto report = rag::sweep_report(cells);
    io::write_json(ctx.out(files::kRagSweep), report);
    r.summary = {{"cells", cells.size()}, {"items", items.size()}, {"failure_counts", report["failure_counts"]}};
    r.outputs = {ctx.out(files::kRagSweep)};
  } else {
    rag::RagConfig rc{cfg.rag.chunk_size, cfg.rag.top_k, cfg.rag.retrieve_k};
    const auto result = rag::run_eval(items, index_corpus, rc, backends, eo);
    io::write_json(ctx.out(files::kRagEval), rag::to_json(result));
    r.summary = {{"items", result.n_items},
                 {"accuracy", result.accuracy},
                 {"format_failures", result.n_format_failures}};
    r.outputs = {ctx.out(files::kRagEval)};
  }
  r.summary["questions_encrypted_here"] = encrypted_items;
  r.summary["index_corpus"] = cfg.rag.index_corpus;
  return r;
}

}  // namespace

Runner::Runner(PipelineConfig config, RunOptions options) : config_(std::move(config)), options_(std::move(options)) {}

StageResult Runner::run_one(const std::string& stage) {
  StageContext ctx(config_, options_);
  if (stage == "detect") return stage_detect(ctx);
  if (stage == "review") return stage_review(ctx);
  if (stage == "encrypt") return stage_encrypt(ctx);
  if (stage == "graph") return stage_graph(ctx);
  if (stage == "tuples") return stage_tuples(ctx);
  if (stage == "synth") return stage_synth(ctx);
  if (stage == "decrypt") return stage_decrypt(ctx);
  if (stage == "audit-leakage") return stage_leakage(ctx);
  if (stage == "audit-hallucination") return stage_hallucination(ctx);
  if (stage == "rag-eval") return stage_rag(ctx);
  throw ConfigInvalid("<stage>", "unknown stage '" + stage + "'");
}

StageResult Runner::run(const std::string& stage) {
  if (!is_stage(stage)) throw ConfigInvalid("<stage>", "unknown stage '" + stage + "'");
  config_.validate_for(stage);
  std::string current = stage;
  try {
    fs::create_directories(config_.paths.out / files::kManifestDir);
    if (stage != "pipeline") {
      auto result = run_one(stage);
      write_manifest(result);
      return result;
    }
    StageResult all{"pipeline"};
    std::vector<StageResult> parts;
    for (const auto& name : stage_names()) {
      if (name == "audit-hallucination" && !config_.paths.responses) continue;
      if (name == "rag-eval" && !config_.paths.mcq) continue;
      current = name;
      auto part = run_one(name);
      write_manifest(part);
      all.summary[name] = part.summary;
      for (const auto& p : part.inputs) {
        // Intermediate files are outputs of an earlier stage, not pipeline inputs.
        if (!inside(p, config_.paths.out) && std::find(all.inputs.begin(), all.inputs.end(), p) == all.inputs.end()) {
          all.inputs.push_back(p);
        }
      }
      for (const auto& p : part.outputs) {
        if (std::find(all.outputs.begin(), all.outputs.end(), p) == all.outputs.end()) all.outputs.push_back(p);
      }
      parts.push_back(std::move(part));
    }
    write_manifest(all, parts);
    return all;
  } catch (const ConfigInvalid&) {
    throw;
  } catch (const StageFailure&) {
    throw;
  } catch (const Error& e) {
    throw StageFailure(current, e.kind(), e.what());
  } catch (const std::exception& e) {
    throw StageFailure(current, "Internal", e.what());
  }
}

void Runner::write_manifest(const StageResult& result, const std::vector<StageResult>& parts) const {
  auto m = build_manifest(config_, options_, result);
  if (!parts.empty()) {
    json stages = json::array();
    for (const auto& p : parts) stages.push_back(p.stage);
    m["stages"] = stages;
  }
  io::write_json(config_.paths.out / files::kManifestDir / (result.stage + ".json"), m);
}

Runner Runner::from_manifest(const fs::path& manifest_path) {
  json m;
  try {
    m = io::read_json(manifest_path);
  } catch (const std::exception& e) {
    throw ConfigInvalid("<manifest>", e.what());
  }
  for (const char* key : {"stage", "config", "config_dir"}) {
    if (!m.contains(key)) throw ConfigInvalid("<manifest>", std::string("missing '") + key + "'");
  }
  // Manifests live in <out>/manifests; config_dir is relative to <out>.
  const auto out_dir = fs::absolute(manifest_path).parent_path().parent_path();
  const auto base = (out_dir / m["config_dir"].get<std::string>()).lexically_normal();
  auto cfg = PipelineConfig::from_json(m["config"], base);
  if (config_hash(cfg.raw) != m.value("config_sha256", "")) {
    throw ConfigInvalid("<manifest>", "config hash mismatch (redacted secrets must be supplied via ${VAR})");
  }
  Runner runner(std::move(cfg), RunOptions::from_json(m.value("options", json::object())));
  runner.manifest_stage_ = m["stage"].get<std::string>();
  return runner;
}

}  // namespace cryptosynth::pipeline
