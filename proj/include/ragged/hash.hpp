#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace ragged {

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

/// SHA-256 of a file's contents. Throws ValidationError if unreadable.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace ragged
