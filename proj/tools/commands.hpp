#pragma once

#include <iosfwd>

namespace blindspot::cli {

// Exit codes: 0 success, 1 user error (bad arguments, config or input
// files), 2 internal or numeric failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUser = 1;
inline constexpr int kExitInternal = 2;

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace blindspot::cli
