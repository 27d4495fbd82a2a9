#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace tennis {

// Every failure surfaced to callers carries a stable, lowercase, hyphenated
// code. The service maps codes onto HTTP statuses and the CLI onto exit codes.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

}  // namespace tennis
