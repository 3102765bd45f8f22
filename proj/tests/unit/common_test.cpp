#include <gtest/gtest.h>

#include "cryptosynth/common/entity.hpp"
#include "cryptosynth/common/io.hpp"
#include "cryptosynth/common/unicode.hpp"

namespace cs = cryptosynth;
namespace u = cryptosynth::unicode;

TEST(Unicode, CodepointIndexOverMixedScripts) {
  const std::string s = "ab张三c";
  const u::Utf8Index index(s);
  ASSERT_EQ(index.size(), 5u);
  EXPECT_EQ(index.byte_offset(2), 2u);
  EXPECT_EQ(index.byte_offset(3), 5u);
  EXPECT_EQ(index.byte_offset(5), s.size());
  EXPECT_EQ(index.codepoint_offset(5), 3u);
  EXPECT_EQ(index.slice(s, 2, 4), "张三");
}

TEST(Unicode, ValidatesUtf8) {
  EXPECT_TRUE(u::is_valid_utf8("héllo 世界"));
  EXPECT_FALSE(u::is_valid_utf8(std::string("\xC0\xAF", 2)));    // overlong
  EXPECT_FALSE(u::is_valid_utf8(std::string("\xED\xA0\x80", 3)));  // surrogate
  EXPECT_FALSE(u::is_valid_utf8(std::string("\xE4\xB8", 2)));      // truncated
}

TEST(Unicode, RoundTripsCodepoints) {
  const std::string s = "Zoë 𝔘 张";
  EXPECT_EQ(u::encode(u::decode(s)), s);
  EXPECT_EQ(u::codepoint_length(s), 7u);
}

TEST(Unicode, NfcComposesAndTrimHandlesIdeographicSpace) {
  // e + combining acute -> é
  EXPECT_EQ(u::nfc("e\xCC\x81"), "\xC3\xA9");
  EXPECT_EQ(u::trim("\xE3\x80\x80 Alice \t"), "Alice");
  EXPECT_EQ(u::casefold("ALICE"), "alice");
}

TEST(Unicode, CjkClassification) {
  EXPECT_TRUE(u::is_cjk(U'张'));
  EXPECT_TRUE(u::is_cjk(U'。'));
  EXPECT_FALSE(u::is_cjk(U'A'));
}

TEST(Entity, TypeAndDetectorNamesRoundTrip) {
  for (auto t : cs::kAllEntityTypes) {
    EXPECT_EQ(cs::parse_entity_type(cs::to_string(t)), t);
  }
  EXPECT_EQ(cs::parse_detector("ner_sidecar"), cs::Detector::NerSidecar);
  EXPECT_FALSE(cs::parse_entity_type("NAME").has_value());
}

TEST(Entity, SpanMatchesTextUsesCodepoints) {
  cs::EntitySpan span{"d", 2, 4, "张三", cs::EntityType::Person, cs::Detector::Regex, 1.0};
  EXPECT_TRUE(cs::span_matches_text(span, "ab张三c"));
  span.end = 9;
  EXPECT_FALSE(cs::span_matches_text(span, "ab张三c"));
}

TEST(Entity, SpanJsonRoundTrip) {
  const cs::EntitySpan span{"doc", 1, 3, "xy", cs::EntityType::Date, cs::Detector::Llm, 0.5};
  const nlohmann::json j = span;
  EXPECT_EQ(j.get<cs::EntitySpan>(), span);
}

TEST(Io, HexRoundTripAndRejectsGarbage) {
  EXPECT_EQ(cs::io::to_hex(cs::io::from_hex("00 0a FF\n")), "000aff");
  EXPECT_THROW(cs::io::from_hex("abc"), std::invalid_argument);
  EXPECT_THROW(cs::io::from_hex("zz"), std::invalid_argument);
}

TEST(Io, Sha256KnownAnswer) {
  EXPECT_EQ(cs::io::sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
