#pragma once

#include <iosfwd>

namespace adamlab {

/// Exit codes: 0 success, 1 a certificate or inequality failed, 2 bad
/// configuration or usage.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace adamlab
