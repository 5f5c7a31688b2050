#pragma once

namespace cabin::cli {

// Parses and runs one command. Returns the process exit code: 0 success,
// 1 internal or numeric failure, 2 usage, 3 config, 4 io, 5 data. Failures
// print a single `error[class]: message` line on stderr.
int run(int argc, const char* const* argv);

}  // namespace cabin::cli
