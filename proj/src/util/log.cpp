#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <string>

#include "ttdioc/config.hpp"

namespace ttdioc::util {

void init_logging() {
  if (!spdlog::get("ttdioc")) spdlog::set_default_logger(spdlog::stderr_color_mt("ttdioc"));
  spdlog::set_level(spdlog::level::warn);
  const char* env = std::getenv("TTDIOC_LOG");
  if (env == nullptr || *env == '\0') return;
  const std::string v(env);
  if (v == "error") {
    spdlog::set_level(spdlog::level::err);
  } else if (v == "warn") {
    spdlog::set_level(spdlog::level::warn);
  } else if (v == "info") {
    spdlog::set_level(spdlog::level::info);
  } else if (v == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else {
    spdlog::warn("TTDIOC_LOG={} not recognized; using warn", v);
  }
}

}  // namespace ttdioc::util
