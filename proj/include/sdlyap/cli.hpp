#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sdlyap {

// ============================================================================
// Command-line tool
// ============================================================================

/// Runs the `sdlyap` tool on the given arguments (program name excluded) and
/// returns the process exit code:
///
///   0  every requested check passed (or the command only produced data)
///   1  at least one check was falsified / the search found no feasible answer
///   2  usage error or invalid input
///
/// Subcommands: simulate, verify, masp, certify, lemma, backstep, plot-data.
/// All randomized commands take --seed and are bit-reproducible for a fixed
/// seed; results print as JSON (reports) or CSV (trajectories). `out` receives
/// results and help text, `err` receives error messages.
int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err);

}  // namespace sdlyap
