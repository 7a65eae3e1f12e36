#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace evreg {

// 12-significant-digit decimal rendering shared by every text format, so
// that write -> read -> write reproduces files byte for byte.
std::string fmt12(double v);

// The double obtained by parsing fmt12(v); values stored in JSON documents
// are passed through this so numeric round-trips are exact.
double normalize12(double v);

// Strict double parser; throws DataError on trailing junk or empty input.
double parse_double(const std::string& s);

std::vector<std::string> split_csv(const std::string& line);

std::string read_text_file(const std::filesystem::path& path);

// Writes to a sibling temp file, then renames onto the target.
void atomic_write_text(const std::filesystem::path& path, const std::string& content);

}  // namespace evreg
