#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "cryptosynth/common/error.hpp"

namespace cryptosynth {

class PromptError : public Error {
 public:
  explicit PromptError(const std::string& detail) : Error("PromptError", detail) {}
};

// Text with {{name}} placeholders. Substitution is a single pass, so values
// containing braces are inserted verbatim.
class PromptTemplate {
 public:
  PromptTemplate() = default;
  PromptTemplate(std::string name, std::string text);

  static PromptTemplate load(const std::filesystem::path& path);
  // Copies of prompts/*.txt compiled into the library.
  static PromptTemplate builtin(std::string_view name);
  // dir/<name>.txt when dir is set and the file exists, else the builtin.
  static PromptTemplate resolve(std::string_view name, const std::optional<std::filesystem::path>& dir);

  // Throws PromptError when a placeholder has no value.
  std::string render(const std::map<std::string, std::string>& values) const;
  std::set<std::string> placeholders() const;

  const std::string& name() const noexcept { return name_; }
  const std::string& text() const noexcept { return text_; }

 private:
  std::string name_;
  std::string text_;
};

}  // namespace cryptosynth
