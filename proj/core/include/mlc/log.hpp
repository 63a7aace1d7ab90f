#pragma once

#include <string>

namespace mlc::log {

enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };

// Verbosity comes from the MLC_LOG environment variable ("error", "warn",
// "info", "debug" or 0-3), read once per process; default is "warn".
Level level();

void error(const std::string& message);
void warn(const std::string& message);
void info(const std::string& message);
void debug(const std::string& message);

} // namespace mlc::log
