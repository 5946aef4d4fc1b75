#pragma once

#include <string_view>

#include <spdlog/spdlog.h>

namespace ohda {

/// Maps "error" / "info" / "debug" to a level; anything else is an error.
spdlog::level::level_enum parse_log_level(std::string_view name);

/// Applies OHDA_LOG_LEVEL (default info) to the default logger, which writes to stderr.
void init_logging();

}  // namespace ohda
