#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>

namespace thinkact {

std::string_view trim(std::string_view text) noexcept;

bool is_valid_utf8(std::string_view text) noexcept;

// [a-z][a-z0-9_]*, at most 64 bytes.
bool is_identifier(std::string_view text) noexcept;

std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Uniform double in [0, 1) built from the top 53 bits; portable across
// standard libraries, unlike std::uniform_real_distribution.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) {
  return n == 0 ? 0 : rng() % n;
}

// FNV-1a, rendered as 16 lowercase hex digits.
std::string content_hash(std::string_view bytes);

// Strict decimal number parse of the whole (trimmed) string.
std::optional<double> parse_number(std::string_view text) noexcept;

// Shortest text that round-trips the double; integral values print without
// a fractional part.
std::string format_number(double value);

}  // namespace thinkact
