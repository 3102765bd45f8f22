#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace cryptosynth::io {

// Whole-file helpers; all throw IoFailure.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

// Splits on '\n', dropping a trailing '\r' from each line.
std::vector<std::string> split_lines(std::string_view text);

// One compact JSON object per line, keys sorted (nlohmann default), trailing newline.
void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& records);

// Stable pretty JSON with trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& value);
nlohmann::json read_json(const std::filesystem::path& path);

std::string sha256_hex(std::string_view data);
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL) noexcept;

std::string to_hex(std::string_view bytes);
// Ignores ASCII whitespace; throws std::invalid_argument on odd length or non-hex.
std::string from_hex(std::string_view hex);

}  // namespace cryptosynth::io
