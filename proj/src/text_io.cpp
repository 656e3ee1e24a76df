#include "daepinn/text_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "daepinn/errors.hpp"

namespace daepinn {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string join17(const std::vector<double>& values, char sep) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += sep;
    out += fmt17(values[i]);
  }
  return out;
}

std::vector<double> parse_doubles(const std::string& text, char sep) {
  std::vector<double> out;
  std::string token;
  auto flush = [&] {
    if (token.empty()) return;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(token, &used);
    } catch (const std::exception&) {
      throw ParseError("not a number: '" + token + "'");
    }
    if (used != token.size()) throw ParseError("not a number: '" + token + "'");
    out.push_back(v);
    token.clear();
  };
  for (char ch : text) {
    if (ch == sep || (sep == ' ' && (ch == '\t' || ch == '\r' || ch == '\n'))) {
      flush();
    } else if (ch != ' ' && ch != '\t' && ch != '\r' && ch != '\n') {
      token += ch;
    }
  }
  flush();
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidArgument("cannot open '" + path.string() + "' for writing");
  out << contents;
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

}  // namespace daepinn
