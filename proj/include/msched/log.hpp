#pragma once

#include <cstdarg>

namespace msched {

enum class LogLevel { off = 0, info = 1, debug = 2 };

// Resolved once from SCHED_LOG (off|info|debug, default off).
LogLevel log_level();

void log_msg(LogLevel level, const char* fmt, ...) __attribute__((format(printf, 2, 3)));

} // namespace msched

#define MS_LOG_INFO(...)                                                         \
    do {                                                                         \
        if (::msched::log_level() >= ::msched::LogLevel::info)                   \
            ::msched::log_msg(::msched::LogLevel::info, __VA_ARGS__);            \
    } while (0)

#define MS_LOG_DEBUG(...)                                                        \
    do {                                                                         \
        if (::msched::log_level() >= ::msched::LogLevel::debug)                  \
            ::msched::log_msg(::msched::LogLevel::debug, __VA_ARGS__);           \
    } while (0)
