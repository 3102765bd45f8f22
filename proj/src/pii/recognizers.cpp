#include "cryptosynth/pii/recognizers.hpp"

#include <algorithm>
#include <tuple>

#include "cryptosynth/common/io.hpp"
#include "cryptosynth/common/unicode.hpp"

namespace cryptosynth::pii {

namespace {

constexpr std::string_view kMonths =
    "(?:Jan(?:uary)?|Feb(?:ruary)?|Mar(?:ch)?|Apr(?:il)?|May|June?|July?|Aug(?:ust)?|"
    "Sep(?:t(?:ember)?)?|Oct(?:ober)?|Nov(?:ember)?|Dec(?:ember)?)";

std::string digits_of(std::string_view s) {
  std::string d;
  for (char c : s) {
    if (c >= '0' && c <= '9') d += c;
  }
  return d;
}

std::optional<Validator> parse_validator(std::string_view s) {
  if (s.empty() || s == "none") return Validator::None;
  if (s == "luhn") return Validator::Luhn;
  if (s == "cn_id") return Validator::CnId;
  return std::nullopt;
}

bool passes(Validator v, std::string_view match) {
  switch (v) {
    case Validator::None: return true;
    case Validator::Luhn: return luhn_valid(match);
    case Validator::CnId: return cn_id_valid(match);
  }
  return false;
}

}  // namespace

std::string_view to_string(Validator v) noexcept {
  switch (v) {
    case Validator::None: return "none";
    case Validator::Luhn: return "luhn";
    case Validator::CnId: return "cn_id";
  }
  return "none";
}

bool luhn_valid(std::string_view s) {
  const std::string d = digits_of(s);
  if (d.size() < 13 || d.size() > 19) return false;
  int sum = 0;
  bool dbl = false;
  for (auto it = d.rbegin(); it != d.rend(); ++it) {
    int x = *it - '0';
    if (dbl) {
      x *= 2;
      if (x > 9) x -= 9;
    }
    sum += x;
    dbl = !dbl;
  }
  return sum % 10 == 0;
}

bool cn_id_valid(std::string_view s) {
  static constexpr int kWeights[17] = {7, 9, 10, 5, 8, 4, 2, 1, 6, 3, 7, 9, 10, 5, 8, 4, 2};
  static constexpr char kCheck[] = "10X98765432";
  if (s.size() != 18) return false;
  int sum = 0;
  for (int i = 0; i < 17; ++i) {
    if (s[i] < '0' || s[i] > '9') return false;
    sum += (s[i] - '0') * kWeights[i];
  }
  const char last = s[17] == 'x' ? 'X' : s[17];
  return kCheck[sum % 11] == last;
}

void RecognizerSet::add(std::string name, EntityType type, std::string pattern, Validator validator) {
  Recognizer r;
  r.name = std::move(name);
  r.entity_type = type;
  r.pattern = std::move(pattern);
  r.validator = validator;
  try {
    // Capture group 1 is the entity; the wrapper enforces ASCII word boundaries.
    r.compiled = std::regex("(?:^|[^0-9A-Za-z])(" + r.pattern + ")(?![0-9A-Za-z])",
                            std::regex::ECMAScript | std::regex::optimize);
  } catch (const std::regex_error& e) {
    throw InvalidRecognizer("recognizer '" + r.name + "': " + e.what());
  }
  recognizers_.push_back(std::move(r));
}

RecognizerSet RecognizerSet::defaults() {
  const std::string months(kMonths);
  RecognizerSet set;
  set.add("phone_intl", EntityType::Phone,
          R"((?:\+\d{1,3}[-. ]?)?(?:\(\d{2,4}\)[-. ]?)?\d{2,4}[-. ]\d{3,4}(?:[-. ]\d{3,4})?)");
  set.add("phone_cn_mobile", EntityType::Phone, R"((?:\+86[- ]?)?1[3-9]\d{9})");
  set.add("id_cn_resident", EntityType::IdNumber, R"(\d{17}[\dXx])", Validator::CnId);
  set.add("id_us_ssn", EntityType::IdNumber, R"(\d{3}-\d{2}-\d{4})");
  set.add("bank_card", EntityType::BankCard, R"(\d{4}(?:[ -]?\d{4}){2,3}(?:[ -]?\d{1,3})?)", Validator::Luhn);
  set.add("date_iso", EntityType::Date, R"(\d{4}[-/.]\d{1,2}[-/.]\d{1,2})");
  set.add("date_dmy", EntityType::Date, R"(\d{1,2}/\d{1,2}/\d{4})");
  set.add("date_cn", EntityType::Date, R"(\d{4}年\d{1,2}月(?:\d{1,2}(?:日|号))?)");
  set.add("date_en_mdy", EntityType::Date, months + R"(\.? \d{1,2}(?:st|nd|rd|th)?, \d{4})");
  set.add("date_en_dmy", EntityType::Date, R"(\d{1,2} )" + months + R"( \d{4})");
  return set;
}

RecognizerSet RecognizerSet::from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw InvalidRecognizer("recognizer file must be a JSON array");
  RecognizerSet set;
  for (const auto& item : j) {
    if (!item.is_object() || !item.contains("type") || !item.contains("pattern")) {
      throw InvalidRecognizer("each recognizer needs \"type\" and \"pattern\"");
    }
    const auto type = parse_entity_type(item["type"].get<std::string>());
    if (!type) throw InvalidRecognizer("unknown entity type " + item["type"].dump());
    const auto validator = parse_validator(item.value("validator", ""));
    if (!validator) throw InvalidRecognizer("unknown validator " + item["validator"].dump());
    set.add(item.value("name", std::string(to_string(*type))), *type, item["pattern"].get<std::string>(),
            *validator);
  }
  return set;
}

RecognizerSet RecognizerSet::load(const std::filesystem::path& path) {
  try {
    return from_json(io::read_json(path));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidRecognizer(path.string() + ": " + e.what());
  }
}

nlohmann::json RecognizerSet::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : recognizers_) {
    out.push_back({{"name", r.name},
                   {"type", std::string(cryptosynth::to_string(r.entity_type))},
                   {"pattern", r.pattern},
                   {"validator", std::string(pii::to_string(r.validator))}});
  }
  return out;
}

std::vector<EntitySpan> detect_regex(const corpus::Document& doc, const RecognizerSet& recognizers) {
  std::vector<EntitySpan> spans;
  if (doc.text.empty()) return spans;
  const unicode::Utf8Index index(doc.text);
  for (const auto& r : recognizers.recognizers()) {
    for (auto it = std::sregex_iterator(doc.text.begin(), doc.text.end(), r.compiled); it != std::sregex_iterator();
         ++it) {
      const auto& m = (*it)[1];
      const std::string surface = m.str();
      // A user pattern can still cut a multi-byte character in half.
      if (!unicode::is_valid_utf8(surface) || !passes(r.validator, surface)) continue;
      const auto byte_start = static_cast<std::size_t>(m.first - doc.text.begin());
      const auto byte_end = byte_start + surface.size();
      EntitySpan s;
      s.doc_id = doc.doc_id;
      s.start = index.codepoint_offset(byte_start);
      s.end = index.codepoint_offset(byte_end);
      s.surface = surface;
      s.entity_type = r.entity_type;
      s.detector = Detector::Regex;
      s.confidence = r.validator == Validator::None ? 0.9 : 1.0;
      spans.push_back(std::move(s));
    }
  }
  std::sort(spans.begin(), spans.end(), [](const EntitySpan& a, const EntitySpan& b) {
    return std::tuple(a.start, a.end, a.entity_type, -a.confidence) <
           std::tuple(b.start, b.end, b.entity_type, -b.confidence);
  });
  spans.erase(std::unique(spans.begin(), spans.end()), spans.end());
  return spans;
}

}  // namespace cryptosynth::pii
