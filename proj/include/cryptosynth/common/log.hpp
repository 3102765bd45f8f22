#pragma once

#include <functional>
#include <string>

namespace cryptosynth::log {

using Sink = std::function<void(const std::string& level, const std::string& message)>;

// Default sink writes "warning: ..." lines to stderr. Returns the old sink.
Sink set_sink(Sink sink);

void warn(const std::string& message);
void info(const std::string& message);

}  // namespace cryptosynth::log
