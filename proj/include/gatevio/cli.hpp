#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace gatevio {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;  ///< bad usage, config, or input files
inline constexpr int kExitRuntime = 2;     ///< failure while computing or writing

/// Entry point of the gatevio tool; args[0] is the program name.
/// Subcommands: simulate, run-vins, run-fgo, evaluate, sweep.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gatevio
