#pragma once

#include <string>

#include "json.hpp"

namespace daepinn {

/// Like json::dump, but floating-point numbers use %.17g so every double
/// survives a round trip and files match digit for digit across platforms.
std::string dump17(const nlohmann::json& j, int indent = 1);

}  // namespace daepinn
