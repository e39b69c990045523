#include "mmrec/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace mmrec::log {
namespace {

std::atomic<Level> g_level{Level::kWarn};
std::atomic<unsigned long> g_warnings{0};
std::mutex g_mutex;

}  // namespace

void set_level(Level level) { g_level = level; }
Level level() { return g_level; }

void warn(std::string_view message) {
  ++g_warnings;
  if (g_level < Level::kWarn) return;
  std::lock_guard lock(g_mutex);
  std::clog << "[mmrec] warning: " << message << '\n';
}

void info(std::string_view message) {
  if (g_level < Level::kInfo) return;
  std::lock_guard lock(g_mutex);
  std::clog << "[mmrec] " << message << '\n';
}

unsigned long warning_count() { return g_warnings; }

}  // namespace mmrec::log
