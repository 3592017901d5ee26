#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace mrsr {

/// Ordered key=value text. Lines starting with '#' and blank lines are ignored.
using KeyValues = std::map<std::string, std::string>;

KeyValues read_kv(const std::filesystem::path& path);
KeyValues parse_kv(const std::string& text, const std::string& source = "<text>");
void write_kv(const std::filesystem::path& path, const KeyValues& values);
std::string format_kv(const KeyValues& values);

std::vector<std::string> split(const std::string& text, char sep);
std::string trim(const std::string& text);
/// Shortest round-trippable decimal form of a double.
std::string format_double(double value);

}  // namespace mrsr
