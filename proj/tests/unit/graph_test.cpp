#include <random>

#include <gtest/gtest.h>

#include "cryptosynth/common/io.hpp"
#include "cryptosynth/common/log.hpp"
#include "cryptosynth/detcrypt/cipher.hpp"
#include "cryptosynth/graph/graph.hpp"
#include "cryptosynth/llm/mock.hpp"
#include "../support/graph_oracle.hpp"
#include "../support/temp_dir.hpp"

using namespace cryptosynth;
using namespace cryptosynth::graph;
using cryptosynth::testing::TempDir;

namespace {

corpus::Document make_doc(std::string id, std::string text, std::string title = "") {
  corpus::Document d;
  d.doc_id = std::move(id);
  d.text = std::move(text);
  if (!title.empty()) d.meta["title"] = title;
  return d;
}

EntitySpan person(const std::string& doc, std::size_t s, std::size_t e, std::string surface) {
  return {doc, s, e, std::move(surface), EntityType::Person, Detector::NerSidecar, 1.0};
}

EntityNode node(std::string id, std::size_t mentions = 1) {
  return {std::move(id), EntityType::Person, mentions, {"d"}};
}

WeightedEdge edge(std::string a, std::string b, double s) { return {std::move(a), std::move(b), s, ""}; }

// Captures warnings for the duration of a test.
struct WarningCapture {
  std::vector<std::string> messages;
  log::Sink old;
  WarningCapture() {
    old = log::set_sink([this](const std::string&, const std::string& m) { messages.push_back(m); });
  }
  ~WarningCapture() { log::set_sink(old); }
};

}  // namespace

TEST(ExtractEntities, EmptyCorpus) { EXPECT_TRUE(extract_entities(corpus::Corpus{}, {}).empty()); }

TEST(ExtractEntities, CountsMentionsAcrossDocuments) {
  const corpus::Corpus c({make_doc("a", "Alice met Bob."), make_doc("b", "Later Alice left.")});
  pii::SpanMap spans;
  spans["a"] = {person("a", 0, 5, "Alice"), person("a", 10, 13, "Bob")};
  spans["b"] = {person("b", 6, 11, "Alice")};
  const auto nodes = extract_entities(c, spans);
  ASSERT_EQ(nodes.size(), 2u);
  EXPECT_EQ(nodes[0], (EntityNode{"Alice", EntityType::Person, 2, {"a", "b"}}));
  EXPECT_EQ(nodes[1].entity_id, "Bob");
  EXPECT_EQ(nodes[1].mention_count, 1u);
}

TEST(ExtractEntities, LlmProposalsDeduplicateAndMustOccur) {
  const corpus::Corpus c({make_doc("a", "Alice met Bob in Paris. Paris was cold.", "Trip")});
  pii::SpanMap spans;
  spans["a"] = {person("a", 0, 5, "Alice")};
  llm::MockChatBackend mock({}, [](const llm::ChatRequest& r) {
    EXPECT_EQ(r.tag, "graph.extract");
    EXPECT_NE(r.messages[0].content.find("Title: Trip"), std::string::npos);
    return std::string("- PERSON: Alice\n- LOCATION: Paris\n- PERSON: Carol\n- FOO: Bob\nnoise line");
  });
  ExtractOptions opts;
  opts.llm = &mock;
  const auto nodes = extract_entities(c, spans, opts);
  ASSERT_EQ(nodes.size(), 2u);
  EXPECT_EQ(nodes[0].entity_id, "Alice");
  EXPECT_EQ(nodes[0].mention_count, 1u);
  EXPECT_EQ(nodes[1], (EntityNode{"Paris", EntityType::Location, 2, {"a"}}));
}

TEST(ExtractEntities, CanonicalFormMergesVariants) {
  // "e" + combining acute vs precomposed "é".
  const corpus::Corpus c({make_doc("a", "Ren\xC3\xA9 and Rene\xCC\x81")});
  pii::SpanMap spans;
  spans["a"] = {person("a", 0, 4, "Ren\xC3\xA9"), person("a", 9, 14, "Rene\xCC\x81")};
  const auto nodes = extract_entities(c, spans);
  ASSERT_EQ(nodes.size(), 1u);
  EXPECT_EQ(nodes[0].mention_count, 2u);
}

TEST(CipherTokenSpans, FindsRenderingsInEncryptedText) {
  const auto key = detcrypt::KeyMaterial::from_hex("000102030405060708090a0b0c0d0e0f");
  const detcrypt::EntityCipher cipher(key);
  const std::string alice = cipher.encrypt("Alice", EntityType::Person).rendering();
  const corpus::Corpus c({make_doc("a", alice + " met Person_[!!] and " + alice)});
  const auto spans = cipher_token_spans(c);
  ASSERT_EQ(spans.at("a").size(), 2u);
  EXPECT_EQ(spans.at("a")[0].surface, alice);
  const auto nodes = extract_entities(c, spans);
  ASSERT_EQ(nodes.size(), 1u);
  EXPECT_EQ(nodes[0].entity_id, alice);
  EXPECT_EQ(nodes[0].mention_count, 2u);
}

TEST(ParseExtraction, AcceptsBulletsAndNumbering) {
  const auto got = parse_extraction("1. PERSON: 张三\n* location : 北京 \n- DATE:\nORG: Acme Corp");
  ASSERT_EQ(got.size(), 3u);
  EXPECT_EQ(got[0], std::make_pair(EntityType::Person, std::string("张三")));
  EXPECT_EQ(got[1], std::make_pair(EntityType::Location, std::string("北京")));
  EXPECT_EQ(got[2], std::make_pair(EntityType::Org, std::string("Acme Corp")));
}

TEST(ParseScore, Examples) {
  EXPECT_DOUBLE_EQ(parse_score("analysis...\nScore: 0.7"), 0.7);
  EXPECT_DOUBLE_EQ(parse_score("Score: 0.3\nmore text\nScore: 0.9"), 0.9);
  EXPECT_DOUBLE_EQ(parse_score("Score: -0.2"), 0.0);
  EXPECT_DOUBLE_EQ(parse_score("**Score:** 0.85."), 0.85);
  EXPECT_DOUBLE_EQ(parse_score("### score: .5 (moderate)"), 0.5);
  EXPECT_DOUBLE_EQ(parse_score("- SCORE : 1"), 1.0);
  EXPECT_TRUE(parse_score_detail("Score: 1.2").clamped);
  EXPECT_THROW(parse_score("The score is high"), ScoreParseFailure);
  EXPECT_THROW(parse_score("Score: n/a"), ScoreParseFailure);
  EXPECT_THROW(parse_score("Scores: 0.4"), ScoreParseFailure);
}

TEST(ScorePair, RendersAssociationPromptAndParses) {
  const corpus::Corpus c({make_doc("d", "Alice hired Bob.", "The Hiring")});
  std::string seen;
  llm::MockChatBackend mock({}, [&](const llm::ChatRequest& r) {
    seen = r.messages[0].content;
    return std::string("### Causal Relationship\n...\nScore: 0.85");
  });
  const auto e = score_pair(node("Bob"), node("Alice"), {&c.documents()[0]}, mock);
  EXPECT_EQ(e.a, "Alice");
  EXPECT_EQ(e.b, "Bob");
  EXPECT_DOUBLE_EQ(e.score, 0.85);
  EXPECT_NE(e.rationale.find("Causal Relationship"), std::string::npos);
  EXPECT_NE(seen.find("E1: Bob\nE2: Alice"), std::string::npos);
  EXPECT_NE(seen.find("Title: The Hiring"), std::string::npos);
  EXPECT_NE(seen.find("Alice hired Bob."), std::string::npos);
  EXPECT_NE(seen.find("Indirect Association"), std::string::npos);
}

TEST(ScorePair, ClampsWithWarning) {
  WarningCapture warnings;
  llm::MockChatBackend mock({}, [](const llm::ChatRequest&) { return std::string("Score: 1.2"); });
  EXPECT_DOUBLE_EQ(score_pair(node("a"), node("b"), {}, mock).score, 1.0);
  ASSERT_EQ(warnings.messages.size(), 1u);
  EXPECT_NE(warnings.messages[0].find("clamped"), std::string::npos);
}

TEST(ScorePair, RetriesOnceThenFails) {
  std::vector<std::string> tags;
  llm::MockChatBackend mock({}, [&](const llm::ChatRequest& r) {
    tags.push_back(r.tag);
    return std::string("I cannot decide.");
  });
  EXPECT_THROW(score_pair(node("a"), node("b"), {}, mock), ScoreParseFailure);
  EXPECT_EQ(tags, (std::vector<std::string>{"graph.score", "graph.score.retry"}));

  int calls = 0;
  llm::MockChatBackend flaky({}, [&](const llm::ChatRequest&) {
    return std::string(++calls == 1 ? "no score" : "Score: 0.4");
  });
  EXPECT_DOUBLE_EQ(score_pair(node("a"), node("b"), {}, flaky).score, 0.4);
}

TEST(ScorePairs, ParallelMatchesSerial) {
  std::vector<EntityNode> nodes;
  for (int i = 0; i < 8; ++i) nodes.push_back(node("n" + std::to_string(i), 1 + i));
  const corpus::Corpus c({make_doc("d", "text")});
  llm::MockChatBackend mock({}, [](const llm::ChatRequest& r) {
    const auto& p = r.messages[0].content;
    const auto e1 = p.find("E1: "), e2 = p.find("E2: ");
    return "Score: 0." + std::to_string((p[e1 + 5] - '0') * 10 + (p[e2 + 5] - '0'));
  });
  const auto schedule = pair_schedule(nodes, 100);
  EXPECT_EQ(score_pairs(schedule, nodes, c, mock, {}, 4), score_pairs(schedule, nodes, c, mock, {}, 1));
}

TEST(BuildGraph, ThresholdBoundaryIsKept) {
  const std::vector<EntityNode> nodes = {node("a"), node("b"), node("c")};
  const auto g = build_graph(nodes, {edge("a", "b", 0.49), edge("b", "c", 0.5), edge("a", "c", 0.9)}, 0.5);
  ASSERT_EQ(g.edges.size(), 2u);
  EXPECT_EQ(g.n(), 3u);
  EXPECT_EQ(build_graph(nodes, {edge("a", "b", 0.49), edge("b", "c", 0.5)}, 0.0).edges.size(), 2u);
  EXPECT_TRUE(build_graph(nodes, {edge("a", "b", 0.49), edge("b", "c", 0.99)}, 1.0).edges.empty());
}

TEST(BuildGraph, RejectsDanglingAndNormalisesDirection) {
  EXPECT_THROW(build_graph({node("a")}, {edge("a", "zz", 0.7)}), DanglingEdge);
  const auto g = build_graph({node("a"), node("b")}, {edge("b", "a", 0.7), edge("a", "b", 0.6)});
  ASSERT_EQ(g.edges.size(), 1u);
  EXPECT_EQ(g.edges[0].a, "a");
  EXPECT_DOUBLE_EQ(g.edges[0].score, 0.7);
  EXPECT_THROW(build_graph({node("a")}, {}, 1.5), std::invalid_argument);
}

TEST(KTuples, StarGraph) {
  const auto g = build_graph({node("c"), node("n1"), node("n2"), node("n3")},
                             {edge("c", "n1", 0.9), edge("c", "n2", 0.7), edge("c", "n3", 0.6)}, 0.5);
  const auto ts = k_tuples(g, 3);
  ASSERT_EQ(ts.tuples.size(), 1u);
  EXPECT_EQ(ts.tuples[0].members, (std::vector<std::string>{"c", "n1", "n2"}));
  EXPECT_EQ(ts.skipped, 3u);
}

TEST(KTuples, PairDedup) {
  const auto g = build_graph({node("a"), node("b")}, {edge("a", "b", 0.8)});
  const auto ts = k_tuples(g, 2);
  ASSERT_EQ(ts.tuples.size(), 1u);
  EXPECT_EQ(ts.tuples[0].members, (std::vector<std::string>{"a", "b"}));
}

TEST(KTuples, SkipsSparseCentersAndValidatesK) {
  const auto g = build_graph({node("a"), node("b"), node("c"), node("d")}, {edge("a", "b", 0.8)});
  const auto ts = k_tuples(g, 4);
  EXPECT_TRUE(ts.tuples.empty());
  EXPECT_EQ(ts.skipped, 4u);
  EXPECT_THROW(k_tuples(g, 1), std::invalid_argument);
  EXPECT_THROW(k_tuples(g, 5), std::invalid_argument);
}

TEST(KTuples, TiesBreakLexicographically) {
  const auto g = build_graph({node("c"), node("x"), node("b"), node("m")},
                             {edge("c", "x", 0.7), edge("c", "b", 0.7), edge("c", "m", 0.7)});
  const auto ts = k_tuples(g, 3);
  ASSERT_EQ(ts.tuples.size(), 1u);
  EXPECT_EQ(ts.tuples[0].members, (std::vector<std::string>{"c", "b", "m"}));
  EXPECT_EQ(ts.skipped, 3u);
}

TEST(KTuples, MaxTuplesCap) {
  const auto g = build_graph({node("a"), node("b"), node("c")},
                             {edge("a", "b", 0.9), edge("b", "c", 0.8), edge("a", "c", 0.7)});
  EXPECT_EQ(k_tuples(g, 2).tuples.size(), 2u);
  EXPECT_EQ(k_tuples(g, 2, 1).tuples.size(), 1u);
}

// Oracle equivalence over random graphs, plus the neighbour-dominance property.
TEST(KTuples, MatchesBruteForceOracle) {
  std::mt19937 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const auto g = cryptosynth::testing::random_graph(rng);
    for (std::size_t k : {2u, 4u, 6u, 8u, 10u}) {
      if (k > g.n()) continue;
      std::size_t oracle_skipped = 0;
      const auto expected = cryptosynth::testing::oracle_k_tuples(g, k, &oracle_skipped);
      const auto got = k_tuples(g, k);
      ASSERT_EQ(got.tuples, expected) << "trial " << trial << " k " << k;
      ASSERT_EQ(got.skipped, oracle_skipped);
      for (const auto& t : got.tuples) {
        double weakest = 2.0;
        std::set<std::string> members(t.members.begin(), t.members.end());
        for (const auto& e : g.edges) {
          if ((e.a == t.center() && members.count(e.b)) || (e.b == t.center() && members.count(e.a))) {
            weakest = std::min(weakest, e.score);
          }
        }
        for (const auto& e : g.edges) {
          const bool touches = e.a == t.center() || e.b == t.center();
          const std::string& other = e.a == t.center() ? e.b : e.a;
          if (touches && !members.count(other)) {
            ASSERT_LE(e.score, weakest);
          }
        }
      }
    }
  }
}

// Scaling scores and threshold by the same c leaves tuple membership unchanged.
TEST(KTuples, ScaleInvarianceProperty) {
  std::mt19937 rng(77);
  for (int trial = 0; trial < 40; ++trial) {
    const auto g = cryptosynth::testing::random_graph(rng, 20);
    const double c = 0.5;
    std::vector<WeightedEdge> scaled = g.edges;
    for (auto& e : scaled) e.score *= c;
    const auto base = build_graph(g.nodes, g.edges, 0.5);
    const auto shrunk = build_graph(g.nodes, scaled, 0.5 * c);
    ASSERT_EQ(base.edges.size(), shrunk.edges.size());
    for (std::size_t k = 2; k <= std::min<std::size_t>(6, g.n()); ++k) {
      ASSERT_EQ(k_tuples(base, k).tuples, k_tuples(shrunk, k).tuples);
    }
  }
}

TEST(PairSchedule, OrdersByMentionProduct) {
  const std::vector<EntityNode> nodes = {node("x", 1), node("y", 5), node("z", 3)};
  EXPECT_TRUE(pair_schedule(nodes, 0).empty());
  const auto s = pair_schedule(nodes, 10);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0], std::make_pair(std::string("y"), std::string("z")));
  EXPECT_EQ(s[1], std::make_pair(std::string("x"), std::string("y")));
  EXPECT_EQ(s[2], std::make_pair(std::string("x"), std::string("z")));
  EXPECT_EQ(pair_schedule(nodes, 1).size(), 1u);
}

TEST(PairSchedule, FullBudgetEnumeratesEachPairOnce) {
  std::vector<EntityNode> nodes;
  for (int i = 0; i < 12; ++i) nodes.push_back(node("n" + std::to_string(i), 1 + i % 4));
  const auto s = pair_schedule(nodes, 1000);
  EXPECT_EQ(s.size(), 66u);
  std::set<std::pair<std::string, std::string>> unique(s.begin(), s.end());
  EXPECT_EQ(unique.size(), 66u);
  for (const auto& [a, b] : s) EXPECT_LT(a, b);
}

TEST(GraphFiles, RoundTrip) {
  TempDir tmp;
  const auto g = build_graph({{"张三", EntityType::Person, 2, {"a", "b"}}, node("b"), node("c")},
                             {{"b", "张三", 0.75, "why\n\"quoted\""}, edge("b", "c", 0.2)}, 0.5);
  write_graph(tmp / "graph.jsonl", g);
  EXPECT_EQ(read_graph(tmp / "graph.jsonl"), g);
  const auto lines = io::split_lines(io::read_file(tmp / "graph.jsonl"));
  EXPECT_EQ(nlohmann::json::parse(lines[0])["kind"], "graph");
  EXPECT_EQ(lines.size(), 1u + 3u + 1u);

  const std::vector<EntityTuple> tuples = {{{"a", "b"}}, {{"c", "a", "b"}}};
  write_tuples(tmp / "tuples.jsonl", tuples);
  EXPECT_EQ(read_tuples(tmp / "tuples.jsonl"), tuples);
}

TEST(GraphFiles, MissingHeaderOrBadRecord) {
  TempDir tmp;
  io::write_file(tmp / "g.jsonl", R"({"kind":"node","entity_id":"a","entity_type":"PERSON","mention_count":1,"doc_refs":[]})" "\n");
  EXPECT_THROW(read_graph(tmp / "g.jsonl"), corpus::MalformedRecord);
  io::write_file(tmp / "h.jsonl", "{\"kind\":\"graph\",\"threshold\":0.5}\n{\"kind\":\"edge\",\"a\":\"x\",\"b\":\"y\",\"score\":0.9}\n");
  EXPECT_THROW(read_graph(tmp / "h.jsonl"), DanglingEdge);
}
