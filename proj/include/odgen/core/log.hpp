#pragma once

#include <cstdarg>
#include <cstdio>

namespace odgen {

enum class LogLevel { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3 };

inline LogLevel& log_threshold() {
    static LogLevel level = LogLevel::kInfo;
    return level;
}

inline void log_msg(LogLevel level, const char* fmt, ...) {
    if (level < log_threshold()) {
        return;
    }
    static const char* tags[] = {"debug", "info", "warn", "error"};
    fprintf(stderr, "[odgen %s] ", tags[static_cast<int>(level)]);
    va_list args;
    va_start(args, fmt);
    vfprintf(stderr, fmt, args);
    va_end(args);
    fprintf(stderr, "\n");
    fflush(stderr);
}

#define LOG_DEBUG(...) ::odgen::log_msg(::odgen::LogLevel::kDebug, __VA_ARGS__)
#define LOG_INFO(...) ::odgen::log_msg(::odgen::LogLevel::kInfo, __VA_ARGS__)
#define LOG_WARN(...) ::odgen::log_msg(::odgen::LogLevel::kWarn, __VA_ARGS__)
#define LOG_ERROR(...) ::odgen::log_msg(::odgen::LogLevel::kError, __VA_ARGS__)

}  // namespace odgen
