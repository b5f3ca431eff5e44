#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace factrec {

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

/// 64-bit FNV-1a; used only to seed deterministic pseudo-random streams.
std::uint64_t fnv1a64(std::string_view data) noexcept;

}  // namespace factrec
