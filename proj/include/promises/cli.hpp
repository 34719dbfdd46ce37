#pragma once

namespace promises {

// Full command-line entry point; returns the process exit code
// (0 success, 1 validation error, 2 numerical failure).
int cli_run(int argc, const char* const* argv);

}  // namespace promises
