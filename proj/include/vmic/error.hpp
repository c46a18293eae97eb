#pragma once

#include <stdexcept>
#include <string>

namespace vmic {

// Validation errors are caller mistakes (bad arguments, violated
// preconditions). Data errors come from the input itself (malformed files,
// degenerate signals).
enum class ErrorKind { validation, data };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string code, const std::string& what)
      : std::runtime_error(what), kind_(kind), code_(std::move(code)) {}

  ErrorKind kind() const noexcept { return kind_; }
  // Short machine-readable identifier, e.g. "rvid.truncated".
  const std::string& code() const noexcept { return code_; }

 private:
  ErrorKind kind_;
  std::string code_;
};

inline Error validation_error(std::string code, const std::string& what) {
  return Error(ErrorKind::validation, std::move(code), what);
}

inline Error data_error(std::string code, const std::string& what) {
  return Error(ErrorKind::data, std::move(code), what);
}

}  // namespace vmic
