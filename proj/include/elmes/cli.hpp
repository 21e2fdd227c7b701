#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "elmes/error.hpp"
#include "elmes/gateway.hpp"

namespace elmes {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;
inline constexpr int kExitEvaluation = 4;
inline constexpr int kExitInternal = 5;

int exit_code_for(ErrorCategory category) noexcept;

struct CliEnv {
  std::ostream& out;
  std::ostream& err;
  // Replaces provider construction for every model (tests, instrumentation).
  Gateway::ProviderFactory factory;
};

/// Runs one `elmes <verb> ...` invocation. `args` excludes the program name.
int dispatch(const std::vector<std::string>& args, const CliEnv& env);

int dispatch(int argc, const char* const* argv, const CliEnv& env);

}  // namespace elmes
