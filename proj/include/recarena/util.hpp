#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace recarena::util {

std::vector<std::string> split(std::string_view text, std::string_view delim);
std::string_view trim(std::string_view text);
std::string to_lower(std::string_view text);

/// Returns the input unchanged when it is valid UTF-8, otherwise re-encodes
/// it byte-wise as Latin-1 (the ML-1M movie titles are Latin-1).
std::string ensure_utf8(std::string_view text);

/// Lowercase alphanumeric tokens.
std::vector<std::string> tokenize(std::string_view text);

std::string sha256_hex(std::string_view data);

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view data);

/// Uniform integer in [0, bound) from a 64-bit Mersenne twister. Unlike
/// std::uniform_int_distribution the mapping is fixed, so seeded output is
/// identical across standard libraries.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound);

/// Fisher-Yates shuffle built on uniform_below.
template <typename T>
void stable_shuffle(std::vector<T>& values, std::mt19937_64& rng) {
  for (std::size_t i = values.size(); i > 1; --i) {
    auto j = static_cast<std::size_t>(uniform_below(rng, i));
    std::swap(values[i - 1], values[j]);
  }
}

/// One JSON value per non-blank line. Errors name the file and line.
std::vector<nlohmann::json> read_json_lines(const std::filesystem::path& path);
void write_json_lines(const std::vector<nlohmann::json>& rows,
                      const std::filesystem::path& path);

}  // namespace recarena::util
