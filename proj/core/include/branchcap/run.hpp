// Subcommand dispatch: expands a RunConfig into simulations or experiments
// and writes the CSV/JSON artifacts.  Every artifact carries a JSON header
// with (seed, config, law) so any output can be replayed exactly.

#pragma once

#include <string>
#include <vector>

#include "branchcap/config.hpp"

namespace branchcap {

struct RunOutcome {
  int exit_code = 0;
  std::vector<std::string> artifacts;  // paths written
  std::string summary;                 // human-readable result lines
};

// Subcommands: simulate, coupled, compute-h, sample-w, verify, recover-z0,
// validate-law.  Exit code 0 on success; verification commands return 1
// when a verdict fails.  I/O and constraint errors surface as exceptions.
RunOutcome run_command(const std::string& subcommand, const RunConfig& cfg);

}  // namespace branchcap
