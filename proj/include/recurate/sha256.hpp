#pragma once

#include <filesystem>
#include <string>

namespace recurate {

// Hex digest of a byte string.
std::string sha256_hex(const std::string& data);

std::string sha256_file(const std::filesystem::path& path);

}  // namespace recurate
