#pragma once

namespace reid {

// Entry point for the `reid` command-line tool. Exit codes: 0 success,
// 1 validation error, 2 runtime/numeric failure, 3 verification failure.
int run_cli(int argc, char** argv);

}  // namespace reid
