#include "msched/log.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace msched {

static LogLevel parse_env() {
    const char* v = std::getenv("SCHED_LOG");
    if (!v || !*v) return LogLevel::off;
    if (std::strcmp(v, "debug") == 0) return LogLevel::debug;
    if (std::strcmp(v, "info") == 0) return LogLevel::info;
    return LogLevel::off;
}

LogLevel log_level() {
    static const LogLevel level = parse_env();
    return level;
}

void log_msg(LogLevel level, const char* fmt, ...) {
    std::fputs(level == LogLevel::debug ? "[msched:debug] " : "[msched] ", stderr);
    va_list args;
    va_start(args, fmt);
    std::vfprintf(stderr, fmt, args);
    va_end(args);
    std::fputc('\n', stderr);
}

} // namespace msched
