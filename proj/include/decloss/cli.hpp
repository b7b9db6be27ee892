#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace decloss {

// Command-line entry point: subcommands enhance, prep, loss, icoo, train-toy,
// gradcheck, psnr. Returns 0 on success, 1 on usage or configuration errors,
// 2 on data errors (I/O, shapes, values, broken preconditions). Diagnostics
// go to err with a stable "error: " prefix; reports and JSON go to out. The
// environment variable DECL_THREADS caps directory-level concurrency.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Same, for in-process callers; args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace decloss
