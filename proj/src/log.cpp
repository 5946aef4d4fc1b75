#include "ohda/log.hpp"

#include <cstdlib>
#include <stdexcept>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>

namespace ohda {

spdlog::level::level_enum parse_log_level(std::string_view name) {
  if (name == "error") return spdlog::level::err;
  if (name == "info") return spdlog::level::info;
  if (name == "debug") return spdlog::level::debug;
  throw std::invalid_argument("OHDA_LOG_LEVEL must be one of error, info, debug (got '" + std::string(name) + "')");
}

void init_logging() {
  static bool installed = false;
  if (!installed) {
    auto logger = spdlog::stderr_color_mt("ohda");
    logger->set_pattern("[%H:%M:%S] [%^%l%$] %v");
    spdlog::set_default_logger(logger);
    installed = true;
  }
  const char* env = std::getenv("OHDA_LOG_LEVEL");
  spdlog::set_level(env && *env ? parse_log_level(env) : spdlog::level::info);
}

}  // namespace ohda
