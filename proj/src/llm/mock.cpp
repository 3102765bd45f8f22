#include "cryptosynth/llm/mock.hpp"

#include <cmath>

#include "cryptosynth/common/io.hpp"
#include "cryptosynth/common/unicode.hpp"
#include "cryptosynth/detcrypt/token.hpp"

namespace cryptosynth::llm {

MockChatBackend::MockChatBackend(std::map<std::string, std::string> fixtures, Responder responder)
    : fixtures_(std::move(fixtures)), responder_(std::move(responder)) {}

std::string MockChatBackend::chat(const ChatRequest& req) {
  if (req.messages.empty()) throw BackendFailure("chat request has no messages");
  {
    std::lock_guard lock(mu_);
    ++calls_;
  }
  const std::string& last = req.messages.back().content;
  if (auto it = fixtures_.find(last); it != fixtures_.end()) return it->second;
  if (responder_) return responder_(req);
  throw BackendFailure("mock backend has no fixture for request tagged '" + req.tag + "'");
}

std::size_t MockChatBackend::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

HashEmbedder::HashEmbedder(std::size_t dim, std::size_t ngram, std::uint64_t seed)
    : dim_(dim), ngram_(ngram), seed_(seed) {
  if (dim_ == 0 || ngram_ == 0) throw std::invalid_argument("HashEmbedder needs dim and ngram >= 1");
}

EmbeddingVector HashEmbedder::embed_one(const std::string& text) const {
  EmbeddingVector v(dim_, 0.0);
  const std::u32string cps = unicode::decode(text);
  if (cps.empty()) return v;
  // Pad with boundary markers so short strings still produce n-grams.
  std::u32string padded = U"\x02" + cps + U"\x03";
  const std::size_t n = std::min(ngram_, padded.size());
  const std::uint64_t basis = 0xcbf29ce484222325ULL ^ (seed_ * 0x9e3779b97f4a7c15ULL);
  for (std::size_t i = 0; i + n <= padded.size(); ++i) {
    const std::string gram = unicode::encode(std::u32string_view(padded).substr(i, n));
    const std::uint64_t h = io::fnv1a64(gram, basis);
    const double sign = (h >> 63) ? -1.0 : 1.0;
    v[h % dim_] += sign;
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
  }
  return v;
}

std::vector<EmbeddingVector> HashEmbedder::embed(const std::vector<std::string>& texts) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_one(t));
  return out;
}

std::set<std::string> overlap_tokens(const std::string& text) {
  std::set<std::string> tokens;
  std::string rest;
  std::size_t cursor = 0;
  for (const auto& tok : detcrypt::parse_cipher_tokens(text)) {
    rest += text.substr(cursor, tok.byte_start - cursor);
    rest += ' ';
    tokens.insert(text.substr(tok.byte_start, tok.byte_end - tok.byte_start));
    cursor = tok.byte_end;
  }
  rest += text.substr(cursor);

  std::string word;
  auto flush = [&] {
    if (!word.empty()) tokens.insert(std::move(word));
    word.clear();
  };
  for (char32_t cp : unicode::decode(rest)) {
    if (cp < 0x80 && std::isalnum(static_cast<int>(cp))) {
      word += static_cast<char>(std::tolower(static_cast<int>(cp)));
    } else {
      flush();
      if (unicode::is_cjk(cp)) {
        std::string s;
        unicode::append_utf8(s, cp);
        tokens.insert(s);
      }
    }
  }
  flush();
  return tokens;
}

std::vector<RerankHit> OverlapReranker::rerank(const std::string& query, const std::vector<std::string>& chunks,
                                               std::size_t top_k) {
  if (top_k == 0) throw std::invalid_argument("rerank top_k must be >= 1");
  const auto q = overlap_tokens(query);
  std::vector<double> scores;
  scores.reserve(chunks.size());
  for (const auto& c : chunks) {
    const auto ct = overlap_tokens(c);
    std::size_t hits = 0;
    for (const auto& t : q) hits += ct.count(t);
    scores.push_back(static_cast<double>(hits));
  }
  return top_hits(scores, top_k);
}

}  // namespace cryptosynth::llm
