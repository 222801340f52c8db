#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <iostream>
#include <mutex>
#include <string>

namespace ricemap::logging {

enum class Level { debug, info, warn, error };

inline const char* level_name(Level l) {
    switch (l) {
        case Level::debug: return "debug";
        case Level::info: return "info";
        case Level::warn: return "warn";
        case Level::error: return "error";
    }
    return "?";
}

inline std::string utc_now_iso() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
    return buf;
}

// Line-delimited `level ts component message` on stderr.
inline void log(Level level, const std::string& component, const std::string& message) {
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    std::cerr << level_name(level) << ' ' << utc_now_iso() << ' ' << component << ' ' << message
              << '\n';
}

inline void info(const std::string& component, const std::string& message) {
    log(Level::info, component, message);
}
inline void warn(const std::string& component, const std::string& message) {
    log(Level::warn, component, message);
}
inline void error(const std::string& component, const std::string& message) {
    log(Level::error, component, message);
}

} // namespace ricemap::logging
