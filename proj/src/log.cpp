#include "mriprep/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace mriprep::log {
namespace {

std::atomic<Level> g_level{Level::info};
std::mutex g_mutex;

void emit(Level lvl, const char* tag, std::string_view message) {
    if (lvl < g_level.load(std::memory_order_relaxed)) return;
    std::lock_guard lock(g_mutex);
    std::clog << "[mriprep] " << tag << ": " << message << '\n';
}

}  // namespace

void set_level(Level lvl) noexcept { g_level.store(lvl, std::memory_order_relaxed); }
Level level() noexcept { return g_level.load(std::memory_order_relaxed); }

void debug(std::string_view message) { emit(Level::debug, "debug", message); }
void info(std::string_view message) { emit(Level::info, "info", message); }
void warn(std::string_view message) { emit(Level::warning, "warning", message); }
void error(std::string_view message) { emit(Level::error, "error", message); }

}  // namespace mriprep::log
