#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace daepinn {

/// %.17g: enough digits for an exact double round trip.
std::string fmt17(double v);

std::string join17(const std::vector<double>& values, char sep = ' ');

std::vector<double> parse_doubles(const std::string& text, char sep = ' ');

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace daepinn
