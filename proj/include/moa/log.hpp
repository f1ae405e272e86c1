#pragma once

#include <string_view>

#include <json.hpp>

namespace moa::log {

enum class Level { debug, info, warn, error };

/// Emits one JSON object per line on stderr: {"level":..,"event":..,...fields}.
void event(Level level, std::string_view name, nlohmann::json fields = nlohmann::json::object());

inline void info(std::string_view name, nlohmann::json fields = nlohmann::json::object()) {
    event(Level::info, name, std::move(fields));
}
inline void warn(std::string_view name, nlohmann::json fields = nlohmann::json::object()) {
    event(Level::warn, name, std::move(fields));
}

void set_min_level(Level level);
Level min_level();

/// Number of warnings emitted since process start (used by --strict).
std::size_t warning_count();

}  // namespace moa::log
