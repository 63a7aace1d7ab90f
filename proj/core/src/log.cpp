#include "mlc/log.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace mlc::log {

namespace {

Level parse_level() {
    const char* env = std::getenv("MLC_LOG");
    if (!env || !*env) return Level::Warn;
    if (!std::strcmp(env, "error") || !std::strcmp(env, "0")) return Level::Error;
    if (!std::strcmp(env, "warn") || !std::strcmp(env, "1")) return Level::Warn;
    if (!std::strcmp(env, "info") || !std::strcmp(env, "2")) return Level::Info;
    if (!std::strcmp(env, "debug") || !std::strcmp(env, "3")) return Level::Debug;
    return Level::Warn;
}

void emit(Level at, const char* tag, const std::string& message) {
    if (static_cast<int>(at) > static_cast<int>(level())) return;
    std::fprintf(stderr, "[%s] %s\n", tag, message.c_str());
}

} // namespace

Level level() {
    static const Level l = parse_level();
    return l;
}

void error(const std::string& message) { emit(Level::Error, "error", message); }
void warn(const std::string& message) { emit(Level::Warn, "warn", message); }
void info(const std::string& message) { emit(Level::Info, "info", message); }
void debug(const std::string& message) { emit(Level::Debug, "debug", message); }

} // namespace mlc::log
