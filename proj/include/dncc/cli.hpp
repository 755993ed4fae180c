#pragma once

// Command-line front end. Subcommands:
//   train      train one ensemble, write manifest / checkpoint / metrics
//   evaluate   evaluate a checkpoint on its validation split
//   verify     identity sweeps and full-model gradient check
//   diversity  per-pair accuracy/diversity deltas between two checkpoints
//   ablate     size / lambda / split sweeps
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
// DNCC_OUTPUT_ROOT, when set, prefixes relative --out directories.

#include <iosfwd>
#include <string>
#include <vector>

namespace dncc::cli {

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dncc::cli
