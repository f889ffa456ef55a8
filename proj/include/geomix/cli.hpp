#pragma once

namespace geomix {

// Entry point behind the geomix binary; exposed so tests can drive the
// commands in-process. Returns the process exit code: 0 success, 1 runtime
// or verification failure, 2 usage/config error.
int run_cli(int argc, const char* const* argv);

}  // namespace geomix
