#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace otsforge::cli {

// Runs one otsforge command. args excludes the program name. Results go to
// `out` (or the files named by --out), error records to `err` as one JSON
// object per line. Returns the process exit code: 0 iff nothing failed.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Exit codes other than 0.
inline constexpr int kExitError = 1;  // library error, see the record's "error" field
inline constexpr int kExitUsage = 2;  // bad command line
inline constexpr int kExitCheckFailed = 3;  // gradcheck tolerance exceeded

}  // namespace otsforge::cli
