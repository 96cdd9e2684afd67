#pragma once

#include <stdexcept>
#include <string>

namespace imt {

enum class ErrorCode {
  invalid_argument,
  not_found,
  conflict,
  io,
};

// Every failure raised by the library carries a code so that the HTTP layer
// can map it onto a status without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::conflict: return "conflict";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

}  // namespace imt
