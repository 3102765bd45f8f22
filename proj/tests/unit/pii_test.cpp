#include <random>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "cryptosynth/common/io.hpp"
#include "cryptosynth/common/unicode.hpp"
#include "cryptosynth/pii/merge.hpp"
#include "cryptosynth/pii/recognizers.hpp"
#include "cryptosynth/pii/sidecar.hpp"
#include "../support/temp_dir.hpp"

using namespace cryptosynth;
using namespace cryptosynth::pii;
using cryptosynth::testing::TempDir;

namespace {

corpus::Document make_doc(std::string text, std::string id = "d1") {
  corpus::Document d;
  d.doc_id = std::move(id);
  d.text = std::move(text);
  return d;
}

EntitySpan span(std::size_t s, std::size_t e, EntityType t, Detector det, std::string doc = "d1") {
  return {std::move(doc), s, e, "", t, det, 1.0};
}

std::vector<EntitySpan> of_type(const std::vector<EntitySpan>& spans, EntityType t) {
  std::vector<EntitySpan> out;
  for (const auto& s : spans) {
    if (s.entity_type == t) out.push_back(s);
  }
  return out;
}

const std::string kFakeSidecar = std::string(CS_SOURCE_DIR) + "/tests/support/fake_sidecar.py";

}  // namespace

TEST(Luhn, KnownNumbers) {
  EXPECT_TRUE(luhn_valid("4111111111111111"));
  EXPECT_TRUE(luhn_valid("4111 1111 1111 1111"));
  EXPECT_FALSE(luhn_valid("4111111111111112"));
  EXPECT_TRUE(luhn_valid("6011000990139424"));
  EXPECT_FALSE(luhn_valid("411111111111"));  // too short to be a card
}

TEST(CnId, ChecksumCharacter) {
  EXPECT_TRUE(cn_id_valid("11010519491231002X"));
  EXPECT_TRUE(cn_id_valid("11010519491231002x"));
  EXPECT_TRUE(cn_id_valid("110101199003071233"));
  EXPECT_FALSE(cn_id_valid("110101199003077777"));
  EXPECT_FALSE(cn_id_valid("1101011990030712"));
}

TEST(DetectRegex, EmptyTextYieldsNothing) {
  EXPECT_TRUE(detect_regex(make_doc(""), RecognizerSet::defaults()).empty());
}

TEST(DetectRegex, InternationalPhone) {
  const auto spans = detect_regex(make_doc("Call +1-555-0100 today"), RecognizerSet::defaults());
  ASSERT_EQ(spans.size(), 1u);
  EXPECT_EQ(spans[0].entity_type, EntityType::Phone);
  EXPECT_EQ(spans[0].surface, "+1-555-0100");
  EXPECT_EQ(spans[0].start, 5u);
  EXPECT_EQ(spans[0].end, 16u);
  EXPECT_EQ(spans[0].detector, Detector::Regex);
}

TEST(DetectRegex, BankCardNeedsLuhn) {
  const auto rec = RecognizerSet::defaults();
  const auto good = of_type(detect_regex(make_doc("card 4111111111111111"), rec), EntityType::BankCard);
  ASSERT_EQ(good.size(), 1u);
  EXPECT_EQ(good[0].start, 5u);
  EXPECT_EQ(good[0].end, 21u);
  EXPECT_TRUE(of_type(detect_regex(make_doc("card 4111111111111112"), rec), EntityType::BankCard).empty());
  const auto spaced = of_type(detect_regex(make_doc("pay 4111 1111 1111 1111 now"), rec), EntityType::BankCard);
  ASSERT_EQ(spaced.size(), 1u);
  EXPECT_EQ(spaced[0].surface, "4111 1111 1111 1111");
}

TEST(DetectRegex, ChineseTextUsesCodepointOffsets) {
  const auto doc = make_doc("张三的电话是13800138000，身份证11010519491231002X，2023年5月8日签约。");
  const auto spans = detect_regex(doc, RecognizerSet::defaults());
  const auto phones = of_type(spans, EntityType::Phone);
  ASSERT_EQ(phones.size(), 1u);
  EXPECT_EQ(phones[0].start, 6u);
  EXPECT_EQ(phones[0].end, 17u);
  const auto ids = of_type(spans, EntityType::IdNumber);
  ASSERT_EQ(ids.size(), 1u);
  EXPECT_EQ(ids[0].surface, "11010519491231002X");
  EXPECT_EQ(ids[0].start, 21u);
  const auto dates = of_type(spans, EntityType::Date);
  ASSERT_EQ(dates.size(), 1u);
  EXPECT_EQ(dates[0].surface, "2023年5月8日");
  for (const auto& s : spans) EXPECT_TRUE(span_matches_text(s, doc.text)) << s.surface;
}

TEST(DetectRegex, DateFormats) {
  const auto rec = RecognizerSet::defaults();
  for (const std::string d : {"2024-03-05", "March 5, 2024", "5 March 2024", "Sept. 12th, 2021", "03/05/2024"}) {
    const auto dates = of_type(detect_regex(make_doc("on " + d + "."), rec), EntityType::Date);
    ASSERT_EQ(dates.size(), 1u) << d;
    EXPECT_EQ(dates[0].surface, d);
  }
}

TEST(DetectRegex, IgnoresDigitsGluedToWords) {
  const auto rec = RecognizerSet::defaults();
  EXPECT_TRUE(detect_regex(make_doc("ref abc13800138000"), rec).empty());
  EXPECT_TRUE(detect_regex(make_doc("order 138001380001234567890"), rec).empty());
}

// Property: every regex span matches its text, and detection is deterministic.
TEST(DetectRegex, SpansMatchTextProperty) {
  std::mt19937 rng(17);
  const std::vector<std::string> pieces = {"张三", " ", "13800138000", "+1-555-0100", "4111111111111111", "，",
                                           "2024-01-02", "x", "5", "😀", "2023年5月8日", "-", "Alice"};
  const auto rec = RecognizerSet::defaults();
  for (int trial = 0; trial < 300; ++trial) {
    std::string text;
    for (int k = 0; k < static_cast<int>(rng() % 12); ++k) text += pieces[rng() % pieces.size()];
    const auto doc = make_doc(text);
    const auto spans = detect_regex(doc, rec);
    for (const auto& s : spans) ASSERT_TRUE(span_matches_text(s, text)) << text;
    ASSERT_EQ(spans, detect_regex(doc, rec));
  }
}

TEST(RecognizerSet, JsonRoundTripAndShippedDefaults) {
  const auto defaults = RecognizerSet::defaults();
  const auto again = RecognizerSet::from_json(defaults.to_json());
  EXPECT_EQ(again.to_json(), defaults.to_json());
  const auto shipped = RecognizerSet::load(std::string(CS_SOURCE_DIR) + "/config/recognizers.json");
  EXPECT_EQ(shipped.to_json(), defaults.to_json());
}

TEST(RecognizerSet, RejectsBadEntries) {
  EXPECT_THROW(RecognizerSet::from_json(nlohmann::json::parse(R"([{"type":"PHONE","pattern":"(\\d"}])")),
               InvalidRecognizer);
  EXPECT_THROW(RecognizerSet::from_json(nlohmann::json::parse(R"([{"type":"NAME","pattern":"x"}])")),
               InvalidRecognizer);
  EXPECT_THROW(RecognizerSet::from_json(nlohmann::json::parse(R"([{"type":"DATE","pattern":"x","validator":"?"}])")),
               InvalidRecognizer);
}

TEST(MergeSpans, EmptyIsEmpty) { EXPECT_TRUE(merge_spans({}).empty()); }

TEST(MergeSpans, StructuredRegexBeatsNer) {
  const auto merged = merge_spans({span(0, 10, EntityType::Person, Detector::NerSidecar),
                                   span(2, 8, EntityType::IdNumber, Detector::Regex)});
  ASSERT_EQ(merged.size(), 1u);
  EXPECT_EQ(merged[0].entity_type, EntityType::IdNumber);
}

TEST(MergeSpans, IdenticalSpansCollapse) {
  const auto merged = merge_spans({span(3, 7, EntityType::Person, Detector::Llm),
                                   span(3, 7, EntityType::Person, Detector::NerSidecar)});
  ASSERT_EQ(merged.size(), 1u);
  EXPECT_EQ(merged[0].detector, Detector::NerSidecar);
}

TEST(MergeSpans, LongerThenEarlierWithinRank) {
  const auto merged = merge_spans({span(0, 4, EntityType::Person, Detector::NerSidecar),
                                   span(2, 9, EntityType::Location, Detector::NerSidecar),
                                   span(9, 12, EntityType::Person, Detector::NerSidecar)});
  ASSERT_EQ(merged.size(), 2u);
  EXPECT_EQ(merged[0].start, 2u);
  EXPECT_EQ(merged[1].start, 9u);
}

TEST(MergeSpans, MixedDocumentsRejected) {
  EXPECT_THROW(merge_spans({span(0, 1, EntityType::Person, Detector::Llm, "a"),
                            span(2, 3, EntityType::Person, Detector::Llm, "b")}),
               MixedDocuments);
}

// Property: output is overlap-free, sorted, a subset of the input, and idempotent.
TEST(MergeSpans, NonOverlappingAndIdempotentProperty) {
  std::mt19937 rng(23);
  const Detector dets[] = {Detector::Regex, Detector::NerSidecar, Detector::Llm, Detector::Manual};
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<EntitySpan> in;
    for (int i = 0; i < static_cast<int>(rng() % 12); ++i) {
      const std::size_t s = rng() % 30;
      in.push_back(span(s, s + 1 + rng() % 8, kAllEntityTypes[rng() % 8], dets[rng() % 4]));
    }
    const auto out = merge_spans(in);
    for (std::size_t i = 0; i < out.size(); ++i) {
      ASSERT_NE(std::find(in.begin(), in.end(), out[i]), in.end());
      for (std::size_t j = i + 1; j < out.size(); ++j) ASSERT_FALSE(out[i].overlaps(out[j]));
      if (i > 0) {
        ASSERT_LT(out[i - 1].start, out[i].start);
      }
    }
    // Every dropped span overlaps some survivor.
    for (const auto& s : in) {
      ASSERT_TRUE(std::any_of(out.begin(), out.end(), [&](const EntitySpan& k) { return k.overlaps(s); }));
    }
    ASSERT_EQ(merge_spans(out), out);
  }
}

class Review : public ::testing::Test {
 protected:
  Review()
      : corpus_({make_doc("Alice met Bob in Paris.", "a"), make_doc("张三在北京。", "b")}) {
    spans_["a"] = {{"a", 0, 5, "Alice", EntityType::Person, Detector::NerSidecar, 0.9},
                   {"a", 10, 13, "Bob", EntityType::Person, Detector::NerSidecar, 0.8}};
    spans_["b"] = {{"b", 0, 2, "张三", EntityType::Person, Detector::NerSidecar, 0.7}};
  }

  void set_verdict(std::size_t record, const std::string& verdict) {
    auto lines = io::split_lines(io::read_file(tmp_ / "review.jsonl"));
    auto rec = nlohmann::json::parse(lines[record]);
    rec["verdict"] = verdict;
    lines[record] = rec.dump();
    std::string joined;
    for (const auto& l : lines) joined += l + "\n";
    io::write_file(tmp_ / "review.jsonl", joined);
  }

  TempDir tmp_;
  corpus::Corpus corpus_;
  SpanMap spans_;
};

TEST_F(Review, ZeroSpansGivesHeaderOnly) {
  export_review(corpus_, {}, tmp_ / "review.jsonl");
  const auto lines = io::split_lines(io::read_file(tmp_ / "review.jsonl"));
  ASSERT_EQ(lines.size(), 1u);
  EXPECT_EQ(nlohmann::json::parse(lines[0])["kind"], "header");
  EXPECT_TRUE(import_review(tmp_ / "review.jsonl", corpus_).empty());
}

TEST_F(Review, KeepAllReproducesSpans) {
  export_review(corpus_, spans_, tmp_ / "review.jsonl");
  const auto lines = io::split_lines(io::read_file(tmp_ / "review.jsonl"));
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(nlohmann::json::parse(lines[1])["verdict"], "");
  for (std::size_t i = 1; i <= 3; ++i) set_verdict(i, "keep");
  const auto back = import_review(tmp_ / "review.jsonl", corpus_);
  ASSERT_EQ(back.size(), 2u);
  for (const auto& [doc, list] : spans_) {
    ASSERT_EQ(back.at(doc).size(), list.size());
    for (std::size_t i = 0; i < list.size(); ++i) {
      auto expected = list[i];
      expected.detector = Detector::Manual;
      expected.confidence = 1.0;
      EXPECT_EQ(back.at(doc)[i], expected);
    }
  }
}

TEST_F(Review, RetypeAndDrop) {
  export_review(corpus_, spans_, tmp_ / "review.jsonl");
  set_verdict(1, "retype:LOCATION");
  set_verdict(2, "drop");
  const auto back = import_review(tmp_ / "review.jsonl", corpus_);
  ASSERT_EQ(back.at("a").size(), 1u);
  EXPECT_EQ(back.at("a")[0].surface, "Alice");
  EXPECT_EQ(back.at("a")[0].entity_type, EntityType::Location);
  EXPECT_EQ(back.at("b").size(), 1u);
}

TEST_F(Review, BadVerdictsAndStaleSpansAreRejected) {
  export_review(corpus_, spans_, tmp_ / "review.jsonl");
  set_verdict(2, "maybe");
  try {
    import_review(tmp_ / "review.jsonl", corpus_);
    FAIL();
  } catch (const MalformedReview& e) {
    EXPECT_EQ(e.line_no(), 3u);
  }
  set_verdict(2, "retype:NAME");
  EXPECT_THROW(import_review(tmp_ / "review.jsonl", corpus_), MalformedReview);
  set_verdict(2, "keep");
  const corpus::Corpus edited({make_doc("Alice met Rob in Paris.", "a"), make_doc("张三在北京。", "b")});
  EXPECT_THROW(import_review(tmp_ / "review.jsonl", edited), MalformedReview);
}

TEST_F(Review, ExportValidatesSpans) {
  spans_["a"][0].surface = "Alicia";
  EXPECT_THROW(export_review(corpus_, spans_, tmp_ / "review.jsonl"), InvalidSpan);
}

TEST_F(Review, SpansFileRoundTrip) {
  write_spans(tmp_ / "spans.jsonl", corpus_, spans_);
  EXPECT_EQ(read_spans(tmp_ / "spans.jsonl"), spans_);
}

TEST(ValidateResponse, ChecksShapes) {
  EXPECT_NO_THROW(validate_response("ner", {{"ok", true}, {"spans", nlohmann::json::array()}}));
  EXPECT_NO_THROW(validate_response("ner", {{"ok", false}, {"error", "boom"}}));
  EXPECT_THROW(validate_response("ner", {{"spans", nlohmann::json::array()}}), ProtocolViolation);
  EXPECT_THROW(validate_response("ner", {{"ok", true}}), ProtocolViolation);
  EXPECT_THROW(validate_response("ner", nlohmann::json::parse(R"({"ok":true,"spans":[{"start":"0","end":1,"type":"X"}]})")),
               ProtocolViolation);
  EXPECT_THROW(validate_response("embed", nlohmann::json::parse(R"({"ok":true,"vectors":[[1,2],[3]]})")),
               ProtocolViolation);
  EXPECT_THROW(validate_response("embed", nlohmann::json::parse(R"({"ok":true,"vectors":[[1,2]],"dim":3})")),
               ProtocolViolation);
  EXPECT_THROW(validate_response("health", {{"ok", true}}), ProtocolViolation);
  EXPECT_THROW(validate_response("ner", {{"ok", false}}), ProtocolViolation);
}

TEST(DetectSidecar, EmptyResponse) {
  InProcessSidecarClient client([](const nlohmann::json&) {
    return nlohmann::json{{"ok", true}, {"spans", nlohmann::json::array()}};
  });
  const auto r = detect_sidecar(make_doc("nothing"), client);
  EXPECT_TRUE(r.spans.empty());
  EXPECT_EQ(r.dropped, 0u);
}

TEST(DetectSidecar, FixtureSpanAndOutOfRangeDrop) {
  InProcessSidecarClient client([](const nlohmann::json& req) {
    EXPECT_EQ(req["op"], "ner");
    EXPECT_EQ(req["lang"], "en");
    return nlohmann::json{{"ok", true},
                          {"spans", {{{"start", 5}, {"end", 9}, {"type", "PERSON"}, {"surface", "John"}},
                                     {{"start", 10}, {"end", 40}, {"type", "PERSON"}}}}};
  });
  auto doc = make_doc("text John here");
  doc.lang = "en";
  const auto r = detect_sidecar(doc, client);
  ASSERT_EQ(r.spans.size(), 1u);
  EXPECT_EQ(r.spans[0], (EntitySpan{"d1", 5, 9, "John", EntityType::Person, Detector::NerSidecar, 1.0}));
  EXPECT_EQ(r.dropped, 1u);
}

TEST(StdioSidecar, SpeaksProtocolWithPythonPeer) {
  StdioSidecarClient client({"python3", kFakeSidecar}, std::chrono::seconds(20));
  EXPECT_EQ(client.health()["dim"], 3);
  auto r = detect_sidecar(make_doc("Alice met Bob"), client);
  ASSERT_EQ(r.spans.size(), 2u);
  EXPECT_EQ(r.spans[0].start, 0u);
  EXPECT_EQ(r.spans[0].end, 5u);
  EXPECT_EQ(r.spans[1].start, 10u);
  EXPECT_EQ(r.spans[1].end, 13u);
  EXPECT_NEAR(r.spans[0].confidence, 0.97, 1e-12);

  r = detect_sidecar(make_doc("😀张三在北京见了John"), client);
  ASSERT_EQ(r.spans.size(), 3u);
  EXPECT_EQ(r.spans[0].surface, "张三");
  EXPECT_EQ(r.spans[0].start, 1u);
  EXPECT_EQ(r.spans[1].entity_type, EntityType::Location);
  EXPECT_EQ(r.spans[2].entity_type, EntityType::Person);
  for (const auto& s : r.spans) EXPECT_TRUE(span_matches_text(s, "😀张三在北京见了John"));

  r = detect_sidecar(make_doc("__bad_offsets__"), client);
  EXPECT_TRUE(r.spans.empty());
  EXPECT_EQ(r.dropped, 2u);

  const auto v = client.embed({"ab", "ab", "c"});
  ASSERT_EQ(v.size(), 3u);
  EXPECT_EQ(v[0], v[1]);
  EXPECT_THROW(client.ner("__missing_field__", "en"), ProtocolViolation);
  EXPECT_THROW(client.call({{"op", "bogus"}}), ProtocolViolation);
  EXPECT_THROW(client.ner("__garbage__", "en"), ProtocolViolation);
  EXPECT_THROW(client.ner("__die__", "en"), SidecarUnavailable);
  EXPECT_THROW(client.health(), SidecarUnavailable);
}

TEST(StdioSidecar, MissingExecutableIsUnavailable) {
  EXPECT_THROW(StdioSidecarClient({"/nonexistent/sidecar-binary"}), SidecarUnavailable);
}

TEST(HttpSidecar, PostsToV1Op) {
  MockSidecar mock({{"Alice", EntityType::Person}}, 8);
  httplib::Server server;
  server.Post("/v1/op", [&](const httplib::Request& req, httplib::Response& res) {
    res.set_content(mock.handle(nlohmann::json::parse(req.body)).dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  auto client = std::make_shared<HttpSidecarClient>("http://127.0.0.1:" + std::to_string(port) + "/");
  const auto r = detect_sidecar(make_doc("Hi Alice"), *client);
  ASSERT_EQ(r.spans.size(), 1u);
  EXPECT_EQ(r.spans[0].start, 3u);
  SidecarEmbedder embedder(client);
  EXPECT_EQ(embedder.dim(), 8u);
  EXPECT_EQ(embedder.embed({"x", "y"}).size(), 2u);
  server.stop();
  th.join();
  EXPECT_THROW(client->health(), SidecarUnavailable);
}

TEST(MockSidecar, GazetteerLongestFirstWithWordBoundaries) {
  const MockSidecar mock({{"Al", EntityType::Person},
                          {"Alice Smith", EntityType::Person},
                          {"Alice", EntityType::Person},
                          {"北京", EntityType::Location}});
  const auto res = mock.handle({{"op", "ner"}, {"text", "Alice Smith, Alice and Al went to 北京"}, {"lang", "en"}});
  validate_response("ner", res);
  const auto& spans = res["spans"];
  ASSERT_EQ(spans.size(), 4u);
  EXPECT_EQ(spans[0]["surface"], "Alice Smith");
  EXPECT_EQ(spans[1]["surface"], "Alice");
  EXPECT_EQ(spans[1]["start"], 13);
  EXPECT_EQ(spans[2]["surface"], "Al");
  EXPECT_EQ(spans[3]["start"], 34);
  EXPECT_EQ(mock.handle({{"op", "nope"}})["ok"], false);
  validate_response("health", mock.handle({{"op", "health"}}));
  const auto emb = mock.handle({{"op", "embed"}, {"texts", {"a", "a"}}});
  validate_response("embed", emb);
  EXPECT_EQ(emb["vectors"][0], emb["vectors"][1]);
}

TEST(SidecarLabels, MapCommonNerTagSets) {
  EXPECT_EQ(map_sidecar_label("PER"), EntityType::Person);
  EXPECT_EQ(map_sidecar_label("gpe"), EntityType::Location);
  EXPECT_EQ(map_sidecar_label("ORGANIZATION"), EntityType::Org);
  EXPECT_EQ(map_sidecar_label("ID_NUMBER"), EntityType::IdNumber);
  EXPECT_EQ(map_sidecar_label("MISC"), EntityType::Other);
}
