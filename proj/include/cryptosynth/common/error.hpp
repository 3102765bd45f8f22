#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace cryptosynth {

// Root of every error the library raises. `kind()` is the stable,
// machine-readable name used in CLI error reports.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class IoFailure : public Error {
 public:
  explicit IoFailure(std::string path, const std::string& detail = "")
      : Error("IoFailure", "I/O failure on '" + path + "'" +
                               (detail.empty() ? "" : ": " + detail)),
        path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace cryptosynth
