#pragma once

#include <string>
#include <vector>

namespace ebgmrf {

/// Command-line entry point: subcommands simulate, fit, ppm, sample-prior,
/// cv. Returns the process exit code (0 success, 2 invalid config, 1 other
/// failures). Exposed as a function so tests can drive the full pipeline.
int run_cli(const std::vector<std::string>& args);

}  // namespace ebgmrf
