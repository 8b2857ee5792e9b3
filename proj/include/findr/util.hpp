#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace findr {

/// Lowercase hex SHA-256 digest (64 chars).
std::string sha256_hex(std::string_view data);

std::string base64_encode(std::string_view data);
/// Strict decoder; throws validation error on malformed input.
std::string base64_decode(std::string_view data);

std::string read_file(const std::filesystem::path& path);

/// Write-temp-then-rename in the destination directory, creating parent
/// directories as needed. Concurrent writers of identical content are safe.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string trim(std::string_view s);

/// Shortest round-trip decimal rendering of a double.
std::string format_real(double x);

}  // namespace findr
