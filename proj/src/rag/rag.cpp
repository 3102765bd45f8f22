#include "cryptosynth/rag/rag.hpp"

#include <cmath>
#include <regex>
#include <stdexcept>

#include "cryptosynth/common/io.hpp"
#include "cryptosynth/common/parallel.hpp"
#include "cryptosynth/common/unicode.hpp"
#include "cryptosynth/detcrypt/token.hpp"

namespace cryptosynth::rag {

namespace {

struct Range {
  std::size_t begin;
  std::size_t end;
};

bool is_ascii_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::size_t skip_spaces(std::string_view text, std::size_t p, std::size_t end) {
  while (p < end && is_ascii_space(text[p])) ++p;
  return p;
}

std::size_t cp_bytes(char32_t cp) { return cp < 0x80 ? 1 : cp < 0x800 ? 2 : cp < 0x10000 ? 3 : 4; }

// Candidate cut positions strictly inside r for the given level:
// 0 paragraphs, 1 sentences, 2 words, 3 CJK characters.
std::vector<std::size_t> cuts(std::string_view text, Range r, int level) {
  std::vector<std::size_t> out;
  auto add = [&](std::size_t p) {
    if (p > r.begin && p < r.end && (out.empty() || out.back() < p)) out.push_back(p);
  };
  switch (level) {
    case 0:
      for (std::size_t i = r.begin; i + 1 < r.end; ++i) {
        if (text[i] == '\n' && text[i + 1] == '\n') {
          std::size_t p = i;
          while (p < r.end && (text[p] == '\n' || text[p] == '\r')) ++p;
          add(p);
          i = p;
        }
      }
      break;
    case 1:
      for (std::size_t i = r.begin; i < r.end; ++i) {
        const char c = text[i];
        if ((c == '.' || c == '!' || c == '?') && i + 1 < r.end && is_ascii_space(text[i + 1])) {
          add(skip_spaces(text, i + 1, r.end));
        }
        // 。 ！ ？
        for (std::string_view mark : {"\xE3\x80\x82", "\xEF\xBC\x81", "\xEF\xBC\x9F"}) {
          if (text.compare(i, mark.size(), mark) == 0 && i + mark.size() <= r.end) {
            add(skip_spaces(text, i + mark.size(), r.end));
          }
        }
      }
      break;
    case 2:
      for (std::size_t i = r.begin; i < r.end; ++i) {
        if (is_ascii_space(text[i])) {
          const std::size_t p = skip_spaces(text, i, r.end);
          add(p);
          i = p;
        }
      }
      break;
    default: {
      std::size_t p = r.begin;
      for (char32_t cp : unicode::decode(text.substr(r.begin, r.end - r.begin))) {
        const std::size_t next = p + cp_bytes(cp);
        if (unicode::is_cjk(cp)) {
          add(p);
          add(next);
        }
        p = next;
      }
    }
  }
  return out;
}

void split(std::string_view text, Range r, int level, std::size_t size,
           const std::vector<detcrypt::ParsedToken>& tokens, std::vector<Range>& out) {
  if (level > 3 || corpus::approx_tokens(text.substr(r.begin, r.end - r.begin)) <= size) {
    out.push_back(r);
    return;
  }
  std::vector<std::size_t> points;
  for (auto p : cuts(text, r, level)) {
    const bool inside_token = std::any_of(tokens.begin(), tokens.end(),
                                          [&](const auto& t) { return t.byte_start < p && p < t.byte_end; });
    if (!inside_token) points.push_back(p);
  }
  std::size_t at = r.begin;
  points.push_back(r.end);
  for (auto p : points) {
    split(text, {at, p}, level + 1, size, tokens, out);
    at = p;
  }
}

}  // namespace

std::vector<Chunk> chunk_document(const corpus::Document& doc, std::size_t size) {
  if (size < kMinChunkSize) throw std::invalid_argument("chunk size must be at least 16");
  const std::string_view text = doc.text;
  std::vector<Chunk> out;
  if (text.empty()) return out;
  const auto tokens = detcrypt::parse_cipher_tokens(text);
  std::vector<Range> pieces;
  split(text, {0, text.size()}, 0, size, tokens, pieces);

  auto emit = [&](Range r) {
    std::string body = unicode::trim(text.substr(r.begin, r.end - r.begin));
    if (body.empty()) return;
    Chunk c;
    c.chunk_id = doc.doc_id + "#" + std::to_string(out.size());
    c.doc_id = doc.doc_id;
    c.approx_token_len = corpus::approx_tokens(body);
    c.text = std::move(body);
    c.byte_begin = r.begin;
    c.byte_end = r.end;
    out.push_back(std::move(c));
  };
  std::optional<Range> cur;
  std::size_t cur_tokens = 0;
  for (const auto& p : pieces) {
    const std::size_t n = corpus::approx_tokens(text.substr(p.begin, p.end - p.begin));
    if (cur && cur_tokens + n > size) {
      emit(*cur);
      cur.reset();
      cur_tokens = 0;
    }
    cur = cur ? Range{cur->begin, p.end} : p;
    cur_tokens += n;
  }
  if (cur) emit(*cur);
  return out;
}

std::vector<Chunk> chunk_corpus(const corpus::Corpus& corpus, std::size_t size) {
  std::vector<Chunk> out;
  for (const auto& d : corpus.documents()) {
    auto chunks = chunk_document(d, size);
    std::move(chunks.begin(), chunks.end(), std::back_inserter(out));
  }
  return out;
}

std::size_t split_token_count(const corpus::Corpus& corpus, const std::vector<Chunk>& chunks) {
  std::size_t split_count = 0;
  for (const auto& d : corpus.documents()) {
    for (const auto& t : detcrypt::parse_cipher_tokens(d.text)) {
      const bool whole = std::any_of(chunks.begin(), chunks.end(), [&](const Chunk& c) {
        return c.doc_id == d.doc_id && c.byte_begin <= t.byte_start && t.byte_end <= c.byte_end;
      });
      if (!whole) ++split_count;
    }
  }
  return split_count;
}

double cosine(const llm::EmbeddingVector& a, const llm::EmbeddingVector& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<llm::RerankHit> VectorIndex::search(const llm::EmbeddingVector& query, std::size_t k) const {
  if (!vectors_.empty() && query.size() != dim_) throw llm::DimMismatch(dim_, query.size());
  std::vector<double> scores;
  scores.reserve(vectors_.size());
  for (const auto& v : vectors_) scores.push_back(cosine(query, v));
  return llm::top_hits(scores, k);
}

VectorIndex build_index(std::vector<Chunk> chunks, llm::Embedder& embedder, std::size_t batch) {
  VectorIndex index;
  index.dim_ = embedder.dim();
  for (std::size_t at = 0; at < chunks.size(); at += batch) {
    std::vector<std::string> texts;
    for (std::size_t i = at; i < std::min(chunks.size(), at + batch); ++i) texts.push_back(chunks[i].text);
    auto vectors = embedder.embed(texts);
    if (vectors.size() != texts.size()) {
      throw llm::BackendFailure("embedder returned " + std::to_string(vectors.size()) + " vectors for " +
                                std::to_string(texts.size()) + " texts");
    }
    for (auto& v : vectors) {
      if (v.size() != index.dim_) throw llm::DimMismatch(index.dim_, v.size());
      index.vectors_.push_back(std::move(v));
    }
  }
  index.chunks_ = std::move(chunks);
  return index;
}

void RagConfig::validate() const {
  if (chunk_size < kMinChunkSize) throw std::invalid_argument("rag.chunk_size must be at least 16");
  if (top_k < 1 || top_k > pool()) throw std::invalid_argument("rag.top_k must be in [1, retrieve_k]");
}

std::vector<Chunk> retrieve(const std::string& question, const VectorIndex& index, const RagConfig& cfg,
                            llm::Embedder& embedder, llm::Reranker& reranker) {
  if (index.empty()) return {};
  const auto query = embedder.embed({question});
  if (query.size() != 1) throw llm::BackendFailure("embedder returned no query vector");
  const auto pool = index.search(query[0], cfg.pool());
  std::vector<std::string> texts;
  for (const auto& h : pool) texts.push_back(index.chunks()[h.index].text);
  std::vector<Chunk> out;
  for (const auto& h : reranker.rerank(question, texts, cfg.top_k)) out.push_back(index.chunks()[pool[h.index].index]);
  return out;
}

std::vector<McqItem> read_mcq(const std::filesystem::path& path) {
  std::vector<McqItem> out;
  std::size_t line_no = 0;
  for (const auto& line : io::split_lines(io::read_file(path))) {
    ++line_no;
    if (unicode::trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      McqItem item;
      item.item_id = j.contains("id") ? j["id"].get<std::string>() : "q" + std::to_string(out.size());
      item.question = j.at("question").get<std::string>();
      const auto options = j.at("options").get<std::vector<std::string>>();
      if (options.size() != 4) throw std::invalid_argument("options must have exactly 4 entries");
      std::copy(options.begin(), options.end(), item.options.begin());
      const auto gold = j.at("gold").get<std::string>();
      if (gold.size() != 1 || gold[0] < 'A' || gold[0] > 'D') throw std::invalid_argument("gold must be one of A-D");
      item.gold = gold[0];
      item.encrypted = j.value("encrypted", false);
      out.push_back(std::move(item));
    } catch (const std::exception& e) {
      throw corpus::MalformedRecord(line_no, e.what());
    }
  }
  return out;
}

void write_mcq(const std::filesystem::path& path, const std::vector<McqItem>& items) {
  std::vector<nlohmann::json> lines;
  for (const auto& i : items) {
    lines.push_back({{"id", i.item_id},
                     {"question", i.question},
                     {"options", i.options},
                     {"gold", std::string(1, i.gold)},
                     {"encrypted", i.encrypted}});
  }
  io::write_jsonl(path, lines);
}

namespace {

std::string encrypt_text(const std::string& raw, const audit::PlaintextInventory& inventory,
                         const detcrypt::EntityCipher& cipher) {
  const std::string text = unicode::nfc(raw);
  std::string out;
  std::size_t at = 0;
  auto plain = [&](std::size_t begin, std::size_t end) {
    const std::string_view seg = std::string_view(text).substr(begin, end - begin);
    std::size_t from = 0;
    for (const auto& [surface, offset] : audit::find_surfaces(seg, inventory.surfaces())) {
      out.append(seg.substr(from, offset - from));
      out += cipher.encrypt(surface, inventory.surfaces().at(surface)).rendering();
      from = offset + surface.size();
    }
    out.append(seg.substr(from));
  };
  for (const auto& t : detcrypt::parse_cipher_tokens(text)) {
    plain(at, t.byte_start);
    out.append(text, t.byte_start, t.byte_end - t.byte_start);
    at = t.byte_end;
  }
  plain(at, text.size());
  return out;
}

}  // namespace

McqItem encrypt_item(const McqItem& item, const audit::PlaintextInventory& inventory,
                     const detcrypt::EntityCipher& cipher) {
  McqItem out = item;
  out.question = encrypt_text(item.question, inventory, cipher);
  for (auto& o : out.options) o = encrypt_text(o, inventory, cipher);
  out.encrypted = true;
  return out;
}

std::optional<char> parse_answer(std::string_view response) {
  static const std::regex bare(R"(^\(?([A-D])\)?[.):]?$)");
  static const std::regex keyed(R"((?:^|[^A-Za-z])[Aa][Nn][Ss][Ww][Ee][Rr](?:\s+[Ii][Ss])?\s*:?\s*\(?([A-D])\)?(?![A-Za-z0-9]))");
  static const std::regex paren(R"(\(([A-D])\))");
  const std::string text = unicode::trim(response);
  std::smatch m;
  for (const auto* re : {&bare, &keyed, &paren}) {
    if (std::regex_search(text, m, *re)) return m.str(1)[0];
  }
  return std::nullopt;
}

AnswerOutcome answer_mcq(const McqItem& item, const std::vector<Chunk>& context, llm::ChatBackend& llm,
                         const PromptTemplate& prompt) {
  std::string ctx;
  for (const auto& c : context) ctx += (ctx.empty() ? "" : "\n\n") + c.text;
  std::string options;
  for (std::size_t i = 0; i < 4; ++i) options += std::string(1, static_cast<char>('A' + i)) + ". " + item.options[i] + "\n";
  AnswerOutcome out;
  out.prompt = prompt.render({{"context", ctx}, {"question", item.question}, {"options", options}});
  out.raw = llm.chat(llm::ChatRequest::user(out.prompt, "rag.answer"));
  out.label = parse_answer(out.raw);
  return out;
}

EvalResult run_eval(const std::vector<McqItem>& items, const corpus::Corpus& corpus, const RagConfig& cfg,
                    const llm::Backends& backends, const EvalOptions& options) {
  cfg.validate();
  if (items.empty()) throw std::invalid_argument("run_eval needs at least one item");
  return run_eval(items, build_index(chunk_corpus(corpus, cfg.chunk_size), *backends.embedder), cfg, backends,
                  options);
}

EvalResult run_eval(const std::vector<McqItem>& items, const VectorIndex& index, const RagConfig& cfg,
                    const llm::Backends& backends, const EvalOptions& options) {
  cfg.validate();
  if (items.empty()) throw std::invalid_argument("run_eval needs at least one item");
  const PromptTemplate prompt = options.prompt ? *options.prompt : PromptTemplate::builtin("rag_answer");
  EvalResult r;
  r.n_items = items.size();
  r.items.resize(items.size());
  parallel_for(items.size(), options.workers, [&](std::size_t i) {
    const auto& item = items[i];
    const auto context = retrieve(item.question, index, cfg, *backends.embedder, *backends.reranker);
    auto outcome = answer_mcq(item, context, *backends.chat, prompt);
    auto& rec = r.items[i];
    rec.item_id = item.item_id;
    rec.gold = item.gold;
    rec.chosen = outcome.label;
    rec.correct = outcome.label == item.gold;
    rec.raw = std::move(outcome.raw);
    rec.prompt = std::move(outcome.prompt);
    for (const auto& c : context) rec.chunk_ids.push_back(c.chunk_id);
  });
  for (const auto& rec : r.items) {
    r.n_correct += rec.correct ? 1 : 0;
    r.n_format_failures += rec.format_failure() ? 1 : 0;
  }
  r.accuracy = static_cast<double>(r.n_correct) / static_cast<double>(r.n_items);
  return r;
}

std::vector<SweepCell> run_sweep(const std::vector<McqItem>& items, const corpus::Corpus& corpus,
                                 const std::vector<std::size_t>& chunk_sizes, const std::vector<std::size_t>& top_ks,
                                 const llm::Backends& backends, const EvalOptions& options) {
  std::vector<SweepCell> out;
  for (auto size : chunk_sizes) {
    RagConfig base{size, 1, 0};
    base.validate();
    const auto index = build_index(chunk_corpus(corpus, size), *backends.embedder);
    for (auto k : top_ks) {
      const RagConfig cfg{size, k, 0};
      out.push_back({size, k, run_eval(items, index, cfg, backends, options)});
    }
  }
  return out;
}

nlohmann::json to_json(const EvalResult& r) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& i : r.items) {
    items.push_back({{"item_id", i.item_id},
                     {"chosen", i.chosen ? nlohmann::json(std::string(1, *i.chosen)) : nlohmann::json(nullptr)},
                     {"gold", std::string(1, i.gold)},
                     {"correct", i.correct},
                     {"raw", i.raw},
                     {"chunk_ids", i.chunk_ids}});
  }
  return {{"accuracy", r.accuracy},
          {"n_items", r.n_items},
          {"n_correct", r.n_correct},
          {"n_format_failures", r.n_format_failures},
          {"items", items}};
}

nlohmann::json sweep_report(const std::vector<SweepCell>& cells) {
  nlohmann::json report = {{"cells", nlohmann::json::array()}, {"failure_counts", nlohmann::json::object()}};
  for (const auto& c : cells) {
    report["cells"].push_back({{"chunk_size", c.chunk_size},
                               {"top_k", c.top_k},
                               {"accuracy", c.result.accuracy},
                               {"n_items", c.result.n_items},
                               {"n_format_failures", c.result.n_format_failures}});
    report["failure_counts"][std::to_string(c.chunk_size)][std::to_string(c.top_k)] = c.result.n_format_failures;
  }
  return report;
}

}  // namespace cryptosynth::rag
