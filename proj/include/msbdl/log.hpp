#pragma once

#include <string_view>

namespace msbdl::log {

enum class Level { debug, info, warn, error, off };

// All library diagnostics go to standard error.
void set_level(Level level);
void debug(std::string_view message);
void info(std::string_view message);
void warn(std::string_view message);

}  // namespace msbdl::log
