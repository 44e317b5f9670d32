#pragma once

#include <ostream>

namespace upmnet {

/// Exit codes: 0 success, 1 validation/usage error, 2 runtime error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace upmnet
