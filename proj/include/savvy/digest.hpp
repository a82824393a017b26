#pragma once

#include <string>
#include <string_view>

namespace savvy {

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);
/// SHA-256 of a file's contents; throws Error when it cannot be read.
std::string sha256_file(const std::string& path);

}  // namespace savvy
