#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rnas::cli {

// Process exit statuses.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;     // validate: architecture violates the space
inline constexpr int kExitConfig = 2;      // bad flags or configuration
inline constexpr int kExitIo = 3;          // unreadable, unwritable or malformed files
inline constexpr int kExitProtocol = 4;    // worker pool empty or protocol failure
inline constexpr int kExitSearch = 5;      // evolution or evaluation could not proceed
inline constexpr int kExitCheckpoint = 6;  // checkpoint corrupt or from another configuration

/// Runs the `rnas` command line. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Routes log output to stderr at the level named by RNAS_LOG_LEVEL.
void init_logging();

}  // namespace rnas::cli
