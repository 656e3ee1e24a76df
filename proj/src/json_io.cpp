#include "daepinn/json_io.hpp"

#include <cmath>

#include "daepinn/errors.hpp"
#include "daepinn/text_io.hpp"

namespace daepinn {

namespace {

void write(const nlohmann::json& j, int indent, int level, std::string& out) {
  const std::string pad = indent > 0 ? "\n" + std::string(static_cast<std::size_t>(indent * (level + 1)), ' ') : "";
  const std::string close = indent > 0 ? "\n" + std::string(static_cast<std::size_t>(indent * level), ' ') : "";
  switch (j.type()) {
    case nlohmann::json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += '{';
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ',';
        first = false;
        out += pad;
        out += nlohmann::json(it.key()).dump();
        out += indent > 0 ? ": " : ":";
        write(it.value(), indent, level + 1, out);
      }
      out += close;
      out += '}';
      return;
    }
    case nlohmann::json::value_t::array: {
      // Numeric arrays stay on one line; they are the bulk of a checkpoint.
      bool flat = true;
      for (const auto& v : j) flat = flat && v.is_number();
      out += '[';
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += flat ? ", " : ",";
        if (!flat) out += pad;
        write(j[i], indent, level + 1, out);
      }
      if (!flat && !j.empty()) out += close;
      out += ']';
      return;
    }
    case nlohmann::json::value_t::number_float: {
      const double v = j.get<double>();
      if (!std::isfinite(v)) throw InvalidArgument("cannot serialize non-finite number");
      std::string s = fmt17(v);
      if (s.find_first_of(".eE") == std::string::npos) s += ".0";
      out += s;
      return;
    }
    default:
      out += j.dump();
  }
}

}  // namespace

std::string dump17(const nlohmann::json& j, int indent) {
  std::string out;
  write(j, indent, 0, out);
  out += '\n';
  return out;
}

}  // namespace daepinn
