#include "prodehaze/pipeline/logging.hpp"

#include <cstdlib>
#include <string>

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "prodehaze/error.hpp"

namespace prodehaze::pipeline {

void init_logging() {
  const char* env = std::getenv("PRODEHAZE_LOG");
  const std::string level = env && *env ? env : "info";
  spdlog::level::level_enum lvl;
  if (level == "error") lvl = spdlog::level::err;
  else if (level == "info") lvl = spdlog::level::info;
  else if (level == "debug") lvl = spdlog::level::debug;
  else fail(ErrorCode::kConfig, "PRODEHAZE_LOG must be one of error, info, debug (got '" + level + "')");

  static auto logger = [] {
    auto l = std::make_shared<spdlog::logger>("prodehaze", std::make_shared<spdlog::sinks::stderr_sink_mt>());
    l->set_pattern("[%l] %v");
    spdlog::set_default_logger(l);
    return l;
  }();
  logger->set_level(lvl);
}

}  // namespace prodehaze::pipeline
