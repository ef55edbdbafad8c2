#pragma once

#include <string>
#include <vector>

namespace stnq {

// Shortest decimal string that round-trips the double. One formatter for
// every file we emit keeps repeated runs byte-identical.
std::string fmt_double(double v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

std::vector<std::string> split(const std::string& s, char sep);
std::string trim(const std::string& s);

}  // namespace stnq
