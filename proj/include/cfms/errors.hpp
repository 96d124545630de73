#pragma once

#include <stdexcept>
#include <string>

namespace cfms {

// Exit-code contract shared with the CLI: 1 usage/parse, 2 model or
// identification failure, 3 numerical failure.
enum class ErrorCode { Usage = 1, Model = 2, Numeric = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message) : std::runtime_error(message), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

inline Error usage_error(const std::string& m) { return Error(ErrorCode::Usage, m); }
inline Error model_error(const std::string& m) { return Error(ErrorCode::Model, m); }
inline Error numeric_error(const std::string& m) { return Error(ErrorCode::Numeric, m); }

}  // namespace cfms
