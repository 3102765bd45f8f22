#include <random>
#include <regex>

#include <gtest/gtest.h>

#include "cryptosynth/audit/audit.hpp"
#include "cryptosynth/common/io.hpp"
#include "../support/audit_fixtures.hpp"
#include "../support/temp_dir.hpp"

using namespace cryptosynth;
using namespace cryptosynth::audit;
using cryptosynth::testing::TempDir;

namespace {

corpus::Document syn(std::string id, std::string text, std::map<std::string, std::string> meta = {}) {
  corpus::Document d;
  d.doc_id = std::move(id);
  d.text = std::move(text);
  d.source = corpus::Source::Synthetic;
  d.parent_ids = {"src"};
  d.meta = std::move(meta);
  return d;
}

// Independent count: blank every Prefix_[...] run with std::regex, then a
// plain substring scan per surface, longest surfaces first.
std::size_t oracle_unencrypted(std::string text, std::vector<std::string> surfaces) {
  static const std::regex token(R"((Person|Location|Phone|ID|Card|Date|Org|Ent)_\[[A-Za-z0-9+/=]+\])");
  text = std::regex_replace(text, token, "\x01");
  std::sort(surfaces.begin(), surfaces.end(), [](auto& a, auto& b) { return a.size() > b.size(); });
  std::size_t n = 0;
  for (const auto& s : surfaces) {
    for (auto pos = text.find(s); pos != std::string::npos; pos = text.find(s, pos)) {
      ++n;
      text.replace(pos, s.size(), std::string(s.size(), '\x01'));
    }
  }
  return n;
}

}  // namespace

TEST(PlaintextInventory, CanonicalizesAndDeduplicates) {
  const PlaintextInventory inv({{"  Rene\xCC\x81 ", EntityType::Person, "a"},
                                {"Ren\xC3\xA9", EntityType::Person, "a"},
                                {"Ren\xC3\xA9", EntityType::Location, "b"},
                                {"Ren\xC3\xA9", EntityType::Person, "c"},
                                {"   ", EntityType::Person, "a"}});
  EXPECT_EQ(inv.entries().size(), 3u);
  ASSERT_EQ(inv.surfaces().size(), 1u);
  EXPECT_EQ(inv.surfaces().at("Ren\xC3\xA9"), EntityType::Person);
  EXPECT_EQ(inv.per_type_counts().at(EntityType::Person), 2u);
}

TEST(PlaintextInventory, SaveLoadRoundTrip) {
  TempDir tmp;
  pii::SpanMap spans;
  spans["d1"] = {{"d1", 0, 2, "张三", EntityType::Person, Detector::NerSidecar, 0.9}};
  spans["d2"] = {{"d2", 4, 15, "13812345678", EntityType::Phone, Detector::Regex, 1.0}};
  const auto inv = PlaintextInventory::from_spans(spans);
  inv.save(tmp / "inv.jsonl");
  EXPECT_EQ(PlaintextInventory::load(tmp / "inv.jsonl").entries(), inv.entries());
  io::write_file(tmp / "bad.jsonl", "{\"surface\":\"x\",\"type\":\"NOPE\"}\n");
  EXPECT_THROW(PlaintextInventory::load(tmp / "bad.jsonl"), corpus::MalformedRecord);
}

TEST(FindSurfaces, LongestMatchWithoutOverlap) {
  const std::map<std::string, EntityType> s = {{"Ann", EntityType::Person}, {"Ann Lee", EntityType::Person},
                                               {"北京", EntityType::Location}};
  const auto hits = find_surfaces("Ann Lee met Ann in 北京北京.", s);
  ASSERT_EQ(hits.size(), 4u);
  EXPECT_EQ(hits[0], std::make_pair(std::string("Ann Lee"), std::size_t{0}));
  EXPECT_EQ(hits[1].first, "Ann");
  EXPECT_EQ(hits[2].first, "北京");
  EXPECT_EQ(hits[3].second, hits[2].second + 6);
}

TEST(LeakageReport, FullyEncryptedFixture) {
  const auto cipher = cryptosynth::testing::fixture_cipher();
  const auto f = cryptosynth::testing::leakage_fixture(0, 120, 4, cipher);
  const auto r = leakage_report(f.synthetic, f.inventory);
  EXPECT_EQ(r.per_type.at(EntityType::Person), (LeakageCounts{0, 120}));
  EXPECT_DOUBLE_EQ(*r.total.ratio(), 0.0);
  EXPECT_EQ(r.per_document.size(), 4u);
}

TEST(LeakageReport, ThreeLeaksInNineHundred) {
  const auto cipher = cryptosynth::testing::fixture_cipher();
  const auto f = cryptosynth::testing::leakage_fixture(3, 900, 7, cipher);
  const auto r = leakage_report(f.synthetic, f.inventory, {nullptr, 3});
  EXPECT_EQ(r.per_type.at(EntityType::Person), (LeakageCounts{3, 900}));
  EXPECT_EQ(r.total.label(), "1:300");
  EXPECT_DOUBLE_EQ(*r.total.ratio(), 3.0 / 900.0);
  std::size_t u = 0, e = 0;
  for (const auto& d : r.per_document) {
    u += d.counts.unencrypted;
    e += d.counts.encrypted;
  }
  EXPECT_EQ(u, 3u);
  EXPECT_EQ(e, 900u);
}

TEST(LeakageReport, SurfaceInsidePayloadIsNotALeak) {
  const PlaintextInventory inv({{"QUJD", EntityType::Person, "src"}});
  const corpus::Corpus c({syn("s", "Person_[QUJDQUJDQUJDQUJDQUJDQQ==] said hi")});
  const auto r = leakage_report(c, inv);
  EXPECT_EQ(r.per_type.at(EntityType::Person), (LeakageCounts{0, 1}));
}

TEST(LeakageReport, UndefinedWithoutTokensAndRejectsEmptyInventory) {
  const PlaintextInventory inv({{"Bob", EntityType::Person, "src"}});
  const auto r = leakage_report(corpus::Corpus({syn("s", "Bob and Bob")}), inv);
  EXPECT_EQ(r.total.unencrypted, 2u);
  EXPECT_FALSE(r.total.ratio().has_value());
  EXPECT_EQ(r.total.label(), "undefined");
  EXPECT_THROW(leakage_report(corpus::Corpus{}, PlaintextInventory{}), std::invalid_argument);
}

TEST(LeakageReport, CasefoldOption) {
  const PlaintextInventory strict({{"Bob", EntityType::Person, "src"}});
  const PlaintextInventory folded({{"Bob", EntityType::Person, "src"}}, {true});
  const corpus::Corpus c({syn("s", "BOB and bob and Bob")});
  EXPECT_EQ(leakage_report(c, strict).total.unencrypted, 1u);
  EXPECT_EQ(leakage_report(c, folded).total.unencrypted, 3u);
}

TEST(LeakageReport, StructuredRecheckReportsRecognizerHits) {
  const auto recognizers = pii::RecognizerSet::defaults();
  const PlaintextInventory inv({{"Bob", EntityType::Person, "src"}});
  const corpus::Corpus c({syn("s", "Call Phone_[QUJDQUJDQUJDQUJDQUJDQQ==] or 13812345678.")});
  const auto r = leakage_report(c, inv, {&recognizers, 1});
  ASSERT_TRUE(r.structured_recheck.has_value());
  EXPECT_EQ(r.structured_recheck->at(EntityType::Phone), 1u);
  EXPECT_FALSE(leakage_report(c, inv).structured_recheck.has_value());
}

// Constructed (u, e) counts always reproduce u/e, checked against an
// independent regex-and-find oracle.
TEST(LeakageReport, ConstructedCountsProperty) {
  const auto cipher = cryptosynth::testing::fixture_cipher();
  std::mt19937 rng(5);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t u = rng() % 20, e = 1 + rng() % 300, docs = 1 + rng() % 9;
    const auto f = cryptosynth::testing::leakage_fixture(u, e, docs, cipher);
    const auto r = leakage_report(f.synthetic, f.inventory, {nullptr, 1 + rng() % 4});
    ASSERT_EQ(r.total, (LeakageCounts{u, e}));
    ASSERT_DOUBLE_EQ(*r.total.ratio(), static_cast<double>(u) / static_cast<double>(e));
    std::vector<std::string> surfaces;
    for (const auto& [s, _] : f.inventory.surfaces()) surfaces.push_back(s);
    for (std::size_t i = 0; i < f.synthetic.size(); ++i) {
      ASSERT_EQ(r.per_document[i].counts.unencrypted,
                oracle_unencrypted(f.synthetic.documents()[i].text, surfaces));
    }
  }
}

TEST(LeakageReport, JsonRoundTrip) {
  const auto recognizers = pii::RecognizerSet::defaults();
  const auto cipher = cryptosynth::testing::fixture_cipher();
  const auto f = cryptosynth::testing::leakage_fixture(2, 50, 3, cipher);
  const auto r = leakage_report(f.synthetic, f.inventory, {&recognizers, 1});
  const nlohmann::json j = r;
  EXPECT_EQ(j["total"]["label"], "1:25");
  EXPECT_EQ(nlohmann::json::parse(j.dump()).get<LeakageReport>(), r);
}

TEST(CipherInventory, Grouping) {
  EXPECT_TRUE(build_cipher_inventory(corpus::Corpus({syn("s", "no tokens")}), "article_id").by_article.empty());
  const std::string t1 = "Person_[QUJDQUJDQUJDQUJDQUJDQQ==]", t2 = "Person_[WFlaWFlaWFlaWFlaWFlaWQ==]";
  const corpus::Corpus c({syn("s1", t1, {{"article_id", "A"}}), syn("s2", t2 + " " + t1, {{"article_id", "B"}}),
                          syn("s3", "Person_[bad]", {{"article_id", "A"}})});
  const auto inv = build_cipher_inventory(c, "article_id");
  ASSERT_EQ(inv.by_article.size(), 2u);
  EXPECT_EQ(inv.by_article.at("A"), (std::set<std::string>{"QUJDQUJDQUJDQUJDQUJDQQ=="}));
  EXPECT_EQ(inv.by_article.at("B").size(), 2u);
  EXPECT_TRUE(inv.held_elsewhere("A", "QUJDQUJDQUJDQUJDQUJDQQ=="));
  EXPECT_FALSE(inv.held_elsewhere("B", "WFlaWFlaWFlaWFlaWFlaWQ=="));
}

TEST(CipherInventory, FallsBackToParentsThenThrows) {
  const std::string t1 = "Person_[QUJDQUJDQUJDQUJDQUJDQQ==]";
  auto d = syn("s1", t1);
  d.parent_ids = {"p1", "p2"};
  const auto inv = build_cipher_inventory(corpus::Corpus({d}), "article_id");
  EXPECT_EQ(inv.by_article.size(), 2u);
  EXPECT_EQ(build_cipher_inventory(corpus::Corpus({d}), "doc_id").by_article.count("s1"), 1u);
  corpus::Document orphan;
  orphan.doc_id = "o";
  orphan.text = t1;
  EXPECT_THROW(build_cipher_inventory(corpus::Corpus({orphan}), "article_id"), MissingArticleKey);
}

TEST(Hallucination, OwnCitationsAreNotFailures) {
  const auto cipher = cryptosynth::testing::fixture_cipher();
  const auto f = cryptosynth::testing::cross_article_fixture(10, 0, cipher);
  const auto r = hallucination_report(f.responses, f.inventory, cipher);
  EXPECT_EQ(r.unique_ciphers, 10u);
  EXPECT_EQ(r.total_ciphers, 20u);
  EXPECT_EQ(r.unique_failures(), 0u);
  EXPECT_DOUBLE_EQ(r.total_ratio(), 0.0);
}

TEST(Hallucination, CrossArticleFixtureMatchesConstructedCounts) {
  const auto cipher = cryptosynth::testing::fixture_cipher();
  const auto f = cryptosynth::testing::cross_article_fixture(57, 11, cipher);
  const auto r = hallucination_report(f.responses, f.inventory, cipher);
  EXPECT_EQ(r.unique_ciphers, 68u);
  EXPECT_EQ(r.unique_failures(), 11u);
  EXPECT_EQ(r.unique.fcaoa, 11u);
  EXPECT_NEAR(r.unique_ratio(), 11.0 / 68.0, 1e-12);
  EXPECT_NEAR(r.unique_ratio(), 0.16, 0.005);
  EXPECT_EQ(r.total_ciphers, 57u * 2 + 11u);
  EXPECT_EQ(r.total.fcaoa, 11u);
}

TEST(Hallucination, UndecodableSubCauses) {
  const auto cipher = cryptosynth::testing::fixture_cipher();
  const auto f = cryptosynth::testing::fcnd_fixture(cipher);
  const auto r = hallucination_report(f.responses, f.inventory, cipher);
  EXPECT_EQ(r.total_ciphers, 6u);
  EXPECT_EQ(r.total.fcnd, 5u);
  EXPECT_EQ(r.total.base64_format, 2u);
  EXPECT_EQ(r.total.pkcs7_padding, 3u);
  EXPECT_EQ(r.total.fcaoa, 0u);
}

TEST(Hallucination, FifteenBytePayloadIsPaddingFailure) {
  const auto cipher = cryptosynth::testing::fixture_cipher();
  const std::vector<std::uint8_t> fifteen(15, 0x7f);
  const auto r = hallucination_report({{"a", "Date_[" + detcrypt::base64_encode(fifteen) + "]"}}, {}, cipher);
  ASSERT_EQ(r.verdicts.size(), 1u);
  EXPECT_EQ(r.verdicts[0].citation, Citation::Fcnd);
  EXPECT_EQ(r.verdicts[0].cause, FcndCause::Pkcs7Padding);
}

TEST(Hallucination, RepairedAndFabricatedTokens) {
  const auto cipher = cryptosynth::testing::fixture_cipher();
  const auto own = cipher.encrypt("Ann", EntityType::Person);
  const auto fabricated = cipher.encrypt("Zed", EntityType::Person);
  CipherInventory inv;
  inv.by_article["a"] = {own.payload_b64};
  std::string stripped = own.payload_b64;
  while (stripped.back() == '=') stripped.pop_back();
  ASSERT_NE(stripped, own.payload_b64);
  const auto r = hallucination_report({{"a", "Person_[" + stripped + "] met " + fabricated.rendering()}}, inv, cipher);
  ASSERT_EQ(r.verdicts.size(), 2u);
  EXPECT_EQ(r.verdicts[0].citation, Citation::Correct);
  EXPECT_TRUE(r.verdicts[0].repaired);
  EXPECT_EQ(r.repaired, 1u);
  EXPECT_EQ(r.verdicts[1].citation, Citation::Fcnd);
  EXPECT_EQ(r.verdicts[1].cause, FcndCause::NotInInventory);
}

// Every parsed token gets exactly one class; sub-causes sum to FCND.
TEST(Hallucination, ClassificationIsTotalProperty) {
  const auto cipher = cryptosynth::testing::fixture_cipher();
  std::mt19937 rng(11);
  const auto names = cryptosynth::testing::fixture_names(30);
  CipherInventory inv;
  std::vector<std::string> pool;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto tok = cipher.encrypt(names[i], EntityType::Person);
    if (i < 20) inv.by_article[i % 2 ? "odd" : "even"].insert(tok.payload_b64);
    pool.push_back(tok.rendering());
  }
  const char* alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ResponseRecord> responses;
    for (int r = 0; r < 4; ++r) {
      std::string text;
      for (int t = 0; t < 8; ++t) {
        if (rng() % 3 == 0) {
          std::string junk;
          for (std::size_t n = 1 + rng() % 40; n > 0; --n) junk += alphabet[rng() % 64];
          text += "Org_[" + junk + "] ";
        } else {
          text += pool[rng() % pool.size()] + " ";
        }
      }
      responses.push_back({rng() % 2 ? "odd" : "even", text});
    }
    const auto rep = hallucination_report(responses, inv, cipher);
    ASSERT_EQ(rep.verdicts.size(), rep.total_ciphers);
    std::size_t correct = 0;
    for (const auto& v : rep.verdicts) {
      ASSERT_EQ(v.cause.has_value(), v.citation == Citation::Fcnd);
      if (v.citation == Citation::Correct) ++correct;
    }
    for (const auto* c : {&rep.total, &rep.unique}) {
      ASSERT_EQ(c->base64_format + c->pkcs7_padding + c->not_in_inventory, c->fcnd);
    }
    ASSERT_EQ(correct + rep.total.failures(), rep.total_ciphers);
    ASSERT_LE(rep.unique_ratio(), 1.0);
    ASSERT_LE(rep.total_ratio(), 1.0);
    const nlohmann::json j = rep;
    ASSERT_EQ(nlohmann::json::parse(j.dump()).get<HallucinationReport>(), rep);
  }
}

TEST(Hallucination, ReadResponses) {
  TempDir tmp;
  io::write_file(tmp / "r.jsonl", "{\"article_id\":\"a\",\"text\":\"x\"}\n\n{\"article_id\":\"b\",\"text\":\"y\"}\n");
  const auto r = read_responses(tmp / "r.jsonl", "article_id");
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[1].article_id, "b");
  EXPECT_THROW(read_responses(tmp / "r.jsonl", "case_id"), corpus::MalformedRecord);
}
