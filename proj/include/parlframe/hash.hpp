#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace parlframe {

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

/// First 16 hex digits of the SHA-256; used for stable ids.
std::string short_hash(std::string_view data);

/// SHA-256 of a file's bytes; empty string when the file cannot be read.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace parlframe
