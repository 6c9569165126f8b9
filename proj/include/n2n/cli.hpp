#pragma once

namespace n2n::cli {

// Full command-line surface. Exit codes: 0 success, 1 usage or configuration
// error, 2 data error, 3 numeric failure.
int cli_main(int argc, const char* const* argv);

}  // namespace n2n::cli
