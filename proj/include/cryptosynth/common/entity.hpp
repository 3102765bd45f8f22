#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cryptosynth/common/error.hpp"

namespace cryptosynth {

enum class EntityType { Person, Location, Org, Phone, IdNumber, BankCard, Date, Other };

inline constexpr EntityType kAllEntityTypes[] = {
    EntityType::Person, EntityType::Location, EntityType::Org,  EntityType::Phone,
    EntityType::IdNumber, EntityType::BankCard, EntityType::Date, EntityType::Other};

// "PERSON", "ID_NUMBER", ...
std::string_view to_string(EntityType t) noexcept;
std::optional<EntityType> parse_entity_type(std::string_view s) noexcept;

// Types the regex recognizers own. They outrank model detections on overlap.
bool is_structured(EntityType t) noexcept;

enum class Detector { Regex, NerSidecar, Llm, Manual };

std::string_view to_string(Detector d) noexcept;
std::optional<Detector> parse_detector(std::string_view s) noexcept;

// A detected entity occurrence. Offsets are codepoints, end exclusive.
struct EntitySpan {
  std::string doc_id;
  std::size_t start = 0;
  std::size_t end = 0;
  std::string surface;
  EntityType entity_type = EntityType::Other;
  Detector detector = Detector::Regex;
  double confidence = 1.0;

  std::size_t length() const noexcept { return end - start; }
  bool overlaps(const EntitySpan& o) const noexcept { return start < o.end && o.start < end; }

  friend bool operator==(const EntitySpan&, const EntitySpan&) = default;
};

// True when 0 <= start < end <= len(text) and surface == text[start, end).
bool span_matches_text(const EntitySpan& span, std::string_view text);

// A span whose offsets or surface disagree with its document.
class InvalidSpan : public Error {
 public:
  explicit InvalidSpan(const std::string& detail) : Error("InvalidSpan", detail) {}
};

void to_json(nlohmann::json& j, const EntitySpan& s);
void from_json(const nlohmann::json& j, EntitySpan& s);

}  // namespace cryptosynth
