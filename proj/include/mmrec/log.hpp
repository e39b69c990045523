#pragma once

#include <string_view>

namespace mmrec::log {

enum class Level { kQuiet = 0, kWarn = 1, kInfo = 2 };

void set_level(Level level);
Level level();

void warn(std::string_view message);
void info(std::string_view message);

/// Number of warnings emitted since process start (counted even when quiet).
unsigned long warning_count();

}  // namespace mmrec::log
