#include "cryptosynth/common/entity.hpp"

#include <array>
#include <utility>

#include "cryptosynth/common/error.hpp"
#include "cryptosynth/common/unicode.hpp"

namespace cryptosynth {
namespace {

constexpr std::array<std::pair<EntityType, std::string_view>, 8> kTypeNames{{
    {EntityType::Person, "PERSON"},
    {EntityType::Location, "LOCATION"},
    {EntityType::Org, "ORG"},
    {EntityType::Phone, "PHONE"},
    {EntityType::IdNumber, "ID_NUMBER"},
    {EntityType::BankCard, "BANK_CARD"},
    {EntityType::Date, "DATE"},
    {EntityType::Other, "OTHER"},
}};

constexpr std::array<std::pair<Detector, std::string_view>, 4> kDetectorNames{{
    {Detector::Regex, "regex"},
    {Detector::NerSidecar, "ner_sidecar"},
    {Detector::Llm, "llm"},
    {Detector::Manual, "manual"},
}};

}  // namespace

std::string_view to_string(EntityType t) noexcept {
  for (const auto& [type, name] : kTypeNames) {
    if (type == t) return name;
  }
  return "OTHER";
}

std::optional<EntityType> parse_entity_type(std::string_view s) noexcept {
  for (const auto& [type, name] : kTypeNames) {
    if (name == s) return type;
  }
  return std::nullopt;
}

bool is_structured(EntityType t) noexcept {
  return t == EntityType::Phone || t == EntityType::IdNumber || t == EntityType::BankCard ||
         t == EntityType::Date;
}

std::string_view to_string(Detector d) noexcept {
  for (const auto& [det, name] : kDetectorNames) {
    if (det == d) return name;
  }
  return "regex";
}

std::optional<Detector> parse_detector(std::string_view s) noexcept {
  for (const auto& [det, name] : kDetectorNames) {
    if (name == s) return det;
  }
  return std::nullopt;
}

bool span_matches_text(const EntitySpan& span, std::string_view text) {
  const unicode::Utf8Index index(text);
  if (span.start >= span.end || span.end > index.size()) return false;
  return index.slice(text, span.start, span.end) == span.surface;
}

void to_json(nlohmann::json& j, const EntitySpan& s) {
  j = nlohmann::json{{"doc_id", s.doc_id},
                     {"start", s.start},
                     {"end", s.end},
                     {"surface", s.surface},
                     {"entity_type", to_string(s.entity_type)},
                     {"detector", to_string(s.detector)},
                     {"confidence", s.confidence}};
}

void from_json(const nlohmann::json& j, EntitySpan& s) {
  s.doc_id = j.at("doc_id").get<std::string>();
  s.start = j.at("start").get<std::size_t>();
  s.end = j.at("end").get<std::size_t>();
  s.surface = j.at("surface").get<std::string>();
  const auto type_name = j.at("entity_type").get<std::string>();
  const auto type = parse_entity_type(type_name);
  if (!type) throw Error("UnknownEntityType", "unknown entity type '" + type_name + "'");
  s.entity_type = *type;
  const auto det_name = j.value("detector", std::string("regex"));
  const auto det = parse_detector(det_name);
  if (!det) throw Error("UnknownDetector", "unknown detector '" + det_name + "'");
  s.detector = *det;
  s.confidence = j.value("confidence", 1.0);
}

}  // namespace cryptosynth
