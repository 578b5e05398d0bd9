#pragma once

namespace desyre {

/// Entry point shared by the binary and the test harness. Returns the
/// process exit code: 0 success, 1 usage/configuration error, 2 numerical
/// failure.
int run_cli(int argc, const char* const* argv);

}  // namespace desyre
