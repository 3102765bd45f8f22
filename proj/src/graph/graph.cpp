#include "cryptosynth/graph/graph.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <regex>
#include <set>
#include <stdexcept>
#include <tuple>

#include "cryptosynth/common/io.hpp"
#include "cryptosynth/common/log.hpp"
#include "cryptosynth/common/parallel.hpp"
#include "cryptosynth/common/unicode.hpp"
#include "cryptosynth/detcrypt/cipher.hpp"
#include "cryptosynth/detcrypt/token.hpp"

namespace cryptosynth::graph {

namespace {

std::string title_of(const corpus::Document& d) {
  auto it = d.meta.find("title");
  return it != d.meta.end() ? it->second : d.doc_id;
}

std::size_t count_occurrences(const std::string& text, const std::string& needle) {
  if (needle.empty()) return 0;
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + needle.size())) ++n;
  return n;
}

struct NodeBuilder {
  std::map<EntityType, std::size_t> votes;
  std::size_t mentions = 0;
  std::set<std::string> docs;
};

EntityType majority(const std::map<EntityType, std::size_t>& votes) {
  EntityType best = EntityType::Other;
  std::size_t best_n = 0;
  for (const auto& [t, n] : votes) {
    if (n > best_n) {
      best = t;
      best_n = n;
    }
  }
  return best;
}

}  // namespace

const EntityNode* EntityGraph::find(const std::string& id) const {
  auto it = std::lower_bound(nodes.begin(), nodes.end(), id,
                             [](const EntityNode& n, const std::string& key) { return n.entity_id < key; });
  return it != nodes.end() && it->entity_id == id ? &*it : nullptr;
}

pii::SpanMap cipher_token_spans(const corpus::Corpus& corpus) {
  pii::SpanMap out;
  for (const auto& doc : corpus.documents()) {
    for (const auto& tok : detcrypt::parse_cipher_tokens(doc.text)) {
      if (!tok.valid) continue;
      out[doc.doc_id].push_back({doc.doc_id, tok.start, tok.end, tok.token.rendering(), tok.token.entity_type,
                                 Detector::Regex, 1.0});
    }
  }
  return out;
}

std::vector<std::pair<EntityType, std::string>> parse_extraction(const std::string& response) {
  static const std::regex line_re(R"(^\s*(?:[-*]|\d+[.)])?\s*([A-Za-z_]+)\s*:\s*(.*?)\s*$)");
  std::vector<std::pair<EntityType, std::string>> out;
  for (const auto& line : io::split_lines(response)) {
    std::smatch m;
    if (!std::regex_match(line, m, line_re)) continue;
    std::string label = m[1].str();
    for (auto& c : label) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    const auto type = parse_entity_type(label);
    std::string surface = unicode::trim(m[2].str());
    if (!type || surface.empty()) continue;
    out.emplace_back(*type, std::move(surface));
  }
  return out;
}

std::vector<EntityNode> extract_entities(const corpus::Corpus& corpus, const pii::SpanMap& spans,
                                         const ExtractOptions& options) {
  const detcrypt::CanonicalOptions canon{options.casefold};
  std::map<std::string, NodeBuilder> nodes;
  for (const auto& doc : corpus.documents()) {
    auto it = spans.find(doc.doc_id);
    if (it == spans.end()) continue;
    for (const auto& s : it->second) {
      const std::string key = detcrypt::canonicalize(s.surface, canon);
      if (key.empty()) continue;
      auto& b = nodes[key];
      ++b.votes[s.entity_type];
      ++b.mentions;
      b.docs.insert(doc.doc_id);
    }
  }

  if (options.llm != nullptr) {
    const PromptTemplate prompt = options.prompt ? *options.prompt : PromptTemplate::builtin("extract");
    std::set<std::string> from_spans;
    for (const auto& [k, _] : nodes) from_spans.insert(k);
    for (const auto& doc : corpus.documents()) {
      const std::string text = prompt.render(
          {{"title", title_of(doc)}, {"context", render_context({&doc}, options.context_chars)}});
      const auto proposals = parse_extraction(options.llm->chat(llm::ChatRequest::user(text, "graph.extract")));
      std::set<std::string> seen_here;
      for (const auto& [type, surface] : proposals) {
        const std::string key = detcrypt::canonicalize(surface, canon);
        if (key.empty() || from_spans.count(key) || !seen_here.insert(key).second) continue;
        const std::size_t hits = count_occurrences(doc.text, surface);
        if (hits == 0) continue;
        auto& b = nodes[key];
        ++b.votes[type];
        b.mentions += hits;
        b.docs.insert(doc.doc_id);
      }
    }
  }

  std::vector<EntityNode> out;
  out.reserve(nodes.size());
  for (auto& [key, b] : nodes) {
    out.push_back({key, majority(b.votes), b.mentions, {b.docs.begin(), b.docs.end()}});
  }
  return out;
}

ParsedScore parse_score_detail(const std::string& response) {
  static const std::regex number_re(R"([-+]?(?:\d+\.?\d*|\.\d+))");
  std::optional<std::string> last;
  for (const auto& line : io::split_lines(response)) {
    std::size_t i = 0;
    while (i < line.size() && std::string_view(" \t#*_>-`").find(line[i]) != std::string_view::npos) ++i;
    if (line.size() - i < 5) continue;
    std::string head = line.substr(i, 5);
    for (auto& c : head) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (head != "score") continue;
    std::size_t j = i + 5;
    while (j < line.size() && (line[j] == '*' || line[j] == '_' || line[j] == ' ')) ++j;
    if (j >= line.size() || line[j] != ':') continue;
    last = line.substr(j + 1);
  }
  if (!last) throw ScoreParseFailure(response);
  std::smatch m;
  if (!std::regex_search(*last, m, number_re)) throw ScoreParseFailure(response);
  const double raw = std::stod(m.str());
  if (!std::isfinite(raw)) throw ScoreParseFailure(response);
  const double v = std::clamp(raw, 0.0, 1.0);
  return {v, v != raw};
}

double parse_score(const std::string& response) { return parse_score_detail(response).value; }

std::vector<const corpus::Document*> pair_context(const EntityNode& a, const EntityNode& b,
                                                  const corpus::Corpus& corpus) {
  std::vector<std::string> ids;
  std::set_intersection(a.doc_refs.begin(), a.doc_refs.end(), b.doc_refs.begin(), b.doc_refs.end(),
                        std::back_inserter(ids));
  if (ids.empty()) {
    std::set_union(a.doc_refs.begin(), a.doc_refs.end(), b.doc_refs.begin(), b.doc_refs.end(),
                   std::back_inserter(ids));
  }
  std::vector<const corpus::Document*> out;
  // Corpus order, not id order, so context reads like the source.
  for (const auto& d : corpus.documents()) {
    if (std::binary_search(ids.begin(), ids.end(), d.doc_id)) out.push_back(&d);
  }
  return out;
}

std::string render_context(const std::vector<const corpus::Document*>& docs, std::size_t max_chars) {
  std::string joined;
  for (const auto* d : docs) {
    if (!joined.empty()) joined += "\n\n";
    joined += d->text;
  }
  const unicode::Utf8Index index(joined);
  if (index.size() <= max_chars) return joined;
  // Cut on whitespace so a cipher token is never truncated.
  std::size_t cut = index.byte_offset(max_chars);
  const auto space = joined.find_last_of(" \n\t", cut);
  if (space != std::string::npos && space > 0) cut = space;
  return joined.substr(0, cut);
}

WeightedEdge score_pair(const EntityNode& a, const EntityNode& b, const std::vector<const corpus::Document*>& context,
                        llm::ChatBackend& llm, const ScoreOptions& options) {
  if (a.entity_id == b.entity_id) throw std::invalid_argument("score_pair needs two distinct entities");
  const PromptTemplate prompt = options.prompt ? *options.prompt : PromptTemplate::builtin("association");
  const std::string title = context.empty() ? "" : title_of(*context.front());
  const std::string text = prompt.render(
      {{"e1", a.entity_id}, {"e2", b.entity_id}, {"title", title}, {"context", render_context(context, options.context_chars)}});
  std::string response;
  for (int attempt = 0; attempt <= options.retries; ++attempt) {
    response = llm.chat(llm::ChatRequest::user(text, attempt == 0 ? "graph.score" : "graph.score.retry"));
    try {
      const ParsedScore s = parse_score_detail(response);
      if (s.clamped) log::warn("score for (" + a.entity_id + ", " + b.entity_id + ") clamped to " + std::to_string(s.value));
      WeightedEdge e{a.entity_id, b.entity_id, s.value, response};
      if (e.b < e.a) std::swap(e.a, e.b);
      return e;
    } catch (const ScoreParseFailure&) {
      if (attempt == options.retries) throw;
    }
  }
  throw ScoreParseFailure(response);
}

std::vector<WeightedEdge> score_pairs(const std::vector<std::pair<std::string, std::string>>& pairs,
                                      const std::vector<EntityNode>& nodes, const corpus::Corpus& corpus,
                                      llm::ChatBackend& llm, const ScoreOptions& options, std::size_t workers) {
  std::map<std::string, const EntityNode*> by_id;
  for (const auto& n : nodes) by_id[n.entity_id] = &n;
  std::vector<WeightedEdge> out(pairs.size());
  parallel_for(pairs.size(), workers, [&](std::size_t i) {
    const auto ia = by_id.find(pairs[i].first), ib = by_id.find(pairs[i].second);
    if (ia == by_id.end() || ib == by_id.end()) throw DanglingEdge(pairs[i].first, pairs[i].second);
    out[i] = score_pair(*ia->second, *ib->second, pair_context(*ia->second, *ib->second, corpus), llm, options);
  });
  return out;
}

EntityGraph build_graph(std::vector<EntityNode> nodes, std::vector<WeightedEdge> edges, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw std::invalid_argument("threshold must lie in [0,1]");
  std::sort(nodes.begin(), nodes.end(), [](const auto& x, const auto& y) { return x.entity_id < y.entity_id; });
  for (std::size_t i = 1; i < nodes.size(); ++i) {
    if (nodes[i].entity_id == nodes[i - 1].entity_id) {
      throw std::invalid_argument("duplicate node '" + nodes[i].entity_id + "'");
    }
  }
  EntityGraph g;
  g.threshold = threshold;
  g.nodes = std::move(nodes);
  std::map<std::pair<std::string, std::string>, WeightedEdge> best;
  for (auto& e : edges) {
    if (!g.find(e.a) || !g.find(e.b)) throw DanglingEdge(e.a, e.b);
    if (e.a == e.b) throw std::invalid_argument("self edge on '" + e.a + "'");
    if (!(e.score >= 0.0 && e.score <= 1.0)) throw std::invalid_argument("edge score outside [0,1]");
    if (e.b < e.a) std::swap(e.a, e.b);
    auto [it, inserted] = best.try_emplace({e.a, e.b}, e);
    if (!inserted && e.score > it->second.score) it->second = e;
  }
  for (auto& [_, e] : best) {
    if (e.score >= threshold) g.edges.push_back(std::move(e));
  }
  return g;
}

TupleSet k_tuples(const EntityGraph& graph, std::size_t k, std::size_t max_tuples) {
  if (k < 2) throw std::invalid_argument("k must be at least 2");
  if (k > graph.n()) throw std::invalid_argument("k exceeds the number of entities");
  std::map<std::string, std::vector<std::pair<double, std::string>>> adj;
  for (const auto& e : graph.edges) {
    adj[e.a].emplace_back(e.score, e.b);
    adj[e.b].emplace_back(e.score, e.a);
  }
  TupleSet out;
  std::set<std::vector<std::string>> seen;
  for (const auto& node : graph.nodes) {
    auto& nbrs = adj[node.entity_id];
    if (nbrs.size() < k - 1) {
      ++out.skipped;
      continue;
    }
    std::sort(nbrs.begin(), nbrs.end(), [](const auto& x, const auto& y) {
      return x.first != y.first ? x.first > y.first : x.second < y.second;
    });
    EntityTuple t;
    t.members.push_back(node.entity_id);
    for (std::size_t i = 0; i + 1 < k; ++i) t.members.push_back(nbrs[i].second);
    std::vector<std::string> key = t.members;
    std::sort(key.begin(), key.end());
    if (!seen.insert(std::move(key)).second) continue;
    out.tuples.push_back(std::move(t));
    if (max_tuples != 0 && out.tuples.size() >= max_tuples) break;
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> pair_schedule(const std::vector<EntityNode>& nodes,
                                                               std::size_t budget) {
  if (budget == 0) return {};
  std::vector<const EntityNode*> sorted;
  for (const auto& n : nodes) sorted.push_back(&n);
  std::sort(sorted.begin(), sorted.end(), [](auto* x, auto* y) { return x->entity_id < y->entity_id; });
  struct Cand {
    unsigned long long product;
    const std::string* a;
    const std::string* b;
  };
  std::vector<Cand> all;
  all.reserve(sorted.size() * (sorted.size() - (sorted.empty() ? 0 : 1)) / 2);
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    for (std::size_t j = i + 1; j < sorted.size(); ++j) {
      all.push_back({static_cast<unsigned long long>(sorted[i]->mention_count) * sorted[j]->mention_count,
                     &sorted[i]->entity_id, &sorted[j]->entity_id});
    }
  }
  const std::size_t n = std::min(budget, all.size());
  auto cmp = [](const Cand& x, const Cand& y) {
    if (x.product != y.product) return x.product > y.product;
    return std::tie(*x.a, *x.b) < std::tie(*y.a, *y.b);
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(), cmp);
  std::vector<std::pair<std::string, std::string>> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.emplace_back(*all[i].a, *all[i].b);
  return out;
}

void to_json(nlohmann::json& j, const EntityNode& n) {
  j = {{"kind", "node"},
       {"entity_id", n.entity_id},
       {"entity_type", std::string(to_string(n.entity_type))},
       {"mention_count", n.mention_count},
       {"doc_refs", n.doc_refs}};
}

void from_json(const nlohmann::json& j, EntityNode& n) {
  n.entity_id = j.at("entity_id").get<std::string>();
  const auto t = parse_entity_type(j.at("entity_type").get<std::string>());
  if (!t) throw std::invalid_argument("unknown entity_type " + j.at("entity_type").dump());
  n.entity_type = *t;
  n.mention_count = j.at("mention_count").get<std::size_t>();
  n.doc_refs = j.at("doc_refs").get<std::vector<std::string>>();
}

void to_json(nlohmann::json& j, const WeightedEdge& e) {
  j = {{"kind", "edge"}, {"a", e.a}, {"b", e.b}, {"score", e.score}, {"rationale", e.rationale}};
}

void from_json(const nlohmann::json& j, WeightedEdge& e) {
  e.a = j.at("a").get<std::string>();
  e.b = j.at("b").get<std::string>();
  e.score = j.at("score").get<double>();
  e.rationale = j.value("rationale", "");
}

void write_graph(const std::filesystem::path& path, const EntityGraph& graph) {
  std::vector<nlohmann::json> records;
  records.push_back({{"kind", "graph"}, {"threshold", graph.threshold}, {"n", graph.n()}, {"edges", graph.edges.size()}});
  for (const auto& n : graph.nodes) records.emplace_back(n);
  for (const auto& e : graph.edges) records.emplace_back(e);
  io::write_jsonl(path, records);
}

EntityGraph read_graph(const std::filesystem::path& path) {
  std::vector<EntityNode> nodes;
  std::vector<WeightedEdge> edges;
  std::optional<double> threshold;
  std::size_t line_no = 0;
  for (const auto& line : io::split_lines(io::read_file(path))) {
    ++line_no;
    if (unicode::trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const std::string kind = j.at("kind").get<std::string>();
      if (kind == "graph") {
        threshold = j.at("threshold").get<double>();
      } else if (kind == "node") {
        nodes.push_back(j.get<EntityNode>());
      } else if (kind == "edge") {
        edges.push_back(j.get<WeightedEdge>());
      } else {
        throw std::invalid_argument("unknown record kind '" + kind + "'");
      }
    } catch (const DanglingEdge&) {
      throw;
    } catch (const std::exception& e) {
      throw corpus::MalformedRecord(line_no, e.what());
    }
  }
  if (!threshold) throw corpus::MalformedRecord(1, "graph file lacks its header record");
  return build_graph(std::move(nodes), std::move(edges), *threshold);
}

void write_tuples(const std::filesystem::path& path, const std::vector<EntityTuple>& tuples) {
  std::vector<nlohmann::json> records;
  for (const auto& t : tuples) records.push_back({{"k", t.k()}, {"center", t.center()}, {"members", t.members}});
  io::write_jsonl(path, records);
}

std::vector<EntityTuple> read_tuples(const std::filesystem::path& path) {
  std::vector<EntityTuple> out;
  std::size_t line_no = 0;
  for (const auto& line : io::split_lines(io::read_file(path))) {
    ++line_no;
    if (unicode::trim(line).empty()) continue;
    try {
      EntityTuple t{nlohmann::json::parse(line).at("members").get<std::vector<std::string>>()};
      if (t.members.size() < 2) throw std::invalid_argument("tuple with fewer than 2 members");
      out.push_back(std::move(t));
    } catch (const std::exception& e) {
      throw corpus::MalformedRecord(line_no, e.what());
    }
  }
  return out;
}

}  // namespace cryptosynth::graph
