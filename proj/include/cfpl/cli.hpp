#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace cfpl {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// `args` excludes the program name. Subcommands: synth, train, eval,
// protocol, gradcheck, sweep. Bad usage prints help and returns kExitUsage;
// runtime errors print a diagnostic and return kExitFailure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cfpl
