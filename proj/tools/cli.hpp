#ifndef CAPGEN_TOOLS_CLI_HPP_
#define CAPGEN_TOOLS_CLI_HPP_

#include <iosfwd>
#include <string>
#include <vector>

#include "capgen/gradcheck.hpp"

namespace capgen::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailed = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;

struct Hooks {
  GradientHook gradient;  // forwarded to run_gradcheck
};

/// Runs one subcommand. `args` excludes the program name. Results go to
/// `out`, diagnostics and the effective-config echo to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const Hooks& hooks = {});

}  // namespace capgen::cli

#endif  // CAPGEN_TOOLS_CLI_HPP_
