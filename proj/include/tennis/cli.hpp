#pragma once

// The `tennis` command line, callable in-process for tests.
//
// Exit codes: 0 ok, 1 validation failure, 2 usage error, 3 I/O, 4 remote
// failure.

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace tennis::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitRemote = 4;

int exit_code_for(std::string_view error_code);

// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tennis::cli
