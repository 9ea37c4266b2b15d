#pragma once

#include <cstdint>
#include <string>

namespace itd {

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);
bool file_exists(const std::string& path);

// FNV-1a 64 as a hex string; used for config/input/summary fingerprints.
std::string fnv1a_hex(const std::string& data);

}  // namespace itd
