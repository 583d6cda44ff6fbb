#pragma once

#include <string_view>

#include <json.hpp>

namespace propdet {

// Parses the TOML subset used by experiment configs into JSON:
// [table] / [a.b] headers, bare/quoted/dotted keys, basic and literal
// strings, integers, floats, booleans, arrays (may span lines) and inline
// tables. Dates, multi-line strings and arrays of tables are rejected.
// Errors raise ConfigError naming the line.
nlohmann::json parse_toml_lite(std::string_view text);

}  // namespace propdet
