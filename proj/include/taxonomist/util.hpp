#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace taxonomist {

using Json = nlohmann::json;
using TimePoint = std::chrono::sys_seconds;

// Text helpers. Case folding is ASCII-only; non-ASCII bytes pass through.
std::string case_fold(std::string_view text);
std::string trim(std::string_view text);
std::vector<std::string_view> split_words(std::string_view text);

/// Word count to token estimate: ceil(1.3 * words).
constexpr std::size_t estimate_tokens(std::size_t words) { return (words * 13 + 9) / 10; }

/// Largest word count whose token estimate fits in `max_tokens`.
constexpr std::size_t max_words_for_tokens(std::size_t max_tokens) {
  return max_tokens * 10 / 13;
}

/// Positions of `needle` in `haystack` where the match is not flanked by
/// alphanumeric characters. Both arguments are expected case-folded.
std::vector<std::size_t> find_word_bounded(std::string_view haystack, std::string_view needle);

std::string sha256_hex(std::string_view data);

/// Sorted keys, shortest round-trip float formatting. The bytes hashed for
/// every digest in the store.
std::string canonical_json(const Json& value);

/// Reads a .json or .toml file into a JSON value.
Json load_structured_file(const std::filesystem::path& path);
Json parse_toml_text(std::string_view text);

std::string read_text_file(const std::filesystem::path& path);
/// Writes through a sibling temp file and renames it into place.
void write_text_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::optional<TimePoint> parse_rfc3339(std::string_view text);
std::string format_rfc3339(TimePoint tp);

}  // namespace taxonomist
