#pragma once

#include "toothsonic/auth.hpp"
#include "toothsonic/config.hpp"

#include <json.hpp>

#include <ostream>

namespace toothsonic {

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitError = 1, kExitUsage = 2, kExitGateFailed = 3 };

/// Full evaluation report: provenance, config echo, metrics per k and protocol.
nlohmann::json report_document(const PipelineConfig& cfg, const EvalReport& report,
                               const SeparationStats* separation = nullptr);

/// Runs `toothsonic <command> ...`. Errors are written to `err` as one JSON
/// object, {"error": {"code", "message"}}.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace toothsonic
