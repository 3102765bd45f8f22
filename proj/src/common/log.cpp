#include "cryptosynth/common/log.hpp"

#include <iostream>
#include <mutex>

namespace cryptosynth::log {

namespace {

std::mutex& sink_mutex() {
  static std::mutex mu;
  return mu;
}

Sink& current() {
  static Sink sink = [](const std::string& level, const std::string& message) {
    std::cerr << level << ": " << message << '\n';
  };
  return sink;
}

void emit(const std::string& level, const std::string& message) {
  std::lock_guard lock(sink_mutex());
  if (current()) current()(level, message);
}

}  // namespace

Sink set_sink(Sink sink) {
  std::lock_guard lock(sink_mutex());
  std::swap(current(), sink);
  return sink;
}

void warn(const std::string& message) { emit("warning", message); }
void info(const std::string& message) { emit("info", message); }

}  // namespace cryptosynth::log
