#pragma once

#include <ostream>

namespace pftopics::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomainError = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the `pftopics` tool. Machine-readable output goes to
/// `out`, diagnostics and human-readable reports to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pftopics::cli
