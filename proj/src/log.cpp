#include "moa/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace moa::log {
namespace {

std::atomic<Level> g_min_level{Level::info};
std::atomic<std::size_t> g_warnings{0};
std::mutex g_mutex;

const char* level_name(Level level) {
    switch (level) {
        case Level::debug: return "debug";
        case Level::info: return "info";
        case Level::warn: return "warn";
        case Level::error: return "error";
    }
    return "info";
}

}  // namespace

void event(Level level, std::string_view name, nlohmann::json fields) {
    if (level == Level::warn) ++g_warnings;
    if (level < g_min_level.load()) return;
    nlohmann::json line = {{"level", level_name(level)}, {"event", std::string(name)}};
    if (fields.is_object()) {
        for (auto& [key, value] : fields.items()) line[key] = std::move(value);
    }
    const std::string text = line.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
    std::lock_guard lock(g_mutex);
    std::cerr << text << '\n';
}

void set_min_level(Level level) { g_min_level = level; }
Level min_level() { return g_min_level.load(); }
std::size_t warning_count() { return g_warnings.load(); }

}  // namespace moa::log
