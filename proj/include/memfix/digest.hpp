#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace memfix {

enum class HashAlgorithm { Sha256, Md5 };

std::string_view algorithm_name(HashAlgorithm a);
std::optional<HashAlgorithm> parse_algorithm(std::string_view name);
/// Length of the lowercase hex digest: 64 for SHA-256, 32 for MD5.
std::size_t hex_length(HashAlgorithm a);

using Bytes = std::vector<std::uint8_t>;

Bytes sha256(std::string_view data);
Bytes sha256(const Bytes& data);
Bytes md5(std::string_view data);
Bytes ripemd160(const Bytes& data);

std::string to_hex(const Bytes& bytes);
std::optional<Bytes> from_hex(std::string_view hex);
bool is_lower_hex(std::string_view s);

/// Lowercase hex digest of `data` under `a`.
std::string hex_digest(HashAlgorithm a, std::string_view data);

}  // namespace memfix
