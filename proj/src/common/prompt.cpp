#include "cryptosynth/common/prompt.hpp"

#include "cryptosynth/common/io.hpp"

namespace cryptosynth {

namespace detail {
// Generated from prompts/*.txt at configure time.
const std::map<std::string, std::string, std::less<>>& builtin_prompts();
}  // namespace detail

PromptTemplate::PromptTemplate(std::string name, std::string text) : name_(std::move(name)), text_(std::move(text)) {}

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) {
  return PromptTemplate(path.stem().string(), io::read_file(path));
}

PromptTemplate PromptTemplate::builtin(std::string_view name) {
  const auto& all = detail::builtin_prompts();
  auto it = all.find(name);
  if (it == all.end()) throw PromptError("no builtin prompt named '" + std::string(name) + "'");
  return PromptTemplate(it->first, it->second);
}

PromptTemplate PromptTemplate::resolve(std::string_view name, const std::optional<std::filesystem::path>& dir) {
  if (dir) {
    const auto path = *dir / (std::string(name) + ".txt");
    if (std::filesystem::exists(path)) return load(path);
  }
  return builtin(name);
}

std::string PromptTemplate::render(const std::map<std::string, std::string>& values) const {
  std::string out;
  out.reserve(text_.size());
  std::size_t pos = 0;
  while (pos < text_.size()) {
    const auto open = text_.find("{{", pos);
    if (open == std::string::npos) break;
    const auto close = text_.find("}}", open + 2);
    if (close == std::string::npos) break;
    out.append(text_, pos, open - pos);
    const std::string key = text_.substr(open + 2, close - open - 2);
    auto it = values.find(key);
    if (it == values.end()) throw PromptError("prompt '" + name_ + "' needs a value for {{" + key + "}}");
    out += it->second;
    pos = close + 2;
  }
  out.append(text_, pos);
  return out;
}

std::set<std::string> PromptTemplate::placeholders() const {
  std::set<std::string> out;
  for (auto open = text_.find("{{"); open != std::string::npos; open = text_.find("{{", open + 2)) {
    const auto close = text_.find("}}", open + 2);
    if (close == std::string::npos) break;
    out.insert(text_.substr(open + 2, close - open - 2));
  }
  return out;
}

}  // namespace cryptosynth
