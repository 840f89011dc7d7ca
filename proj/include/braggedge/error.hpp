#ifndef BRAGGEDGE_ERROR_HPP
#define BRAGGEDGE_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace braggedge {

enum class ErrorKind {
  invalid_argument,
  insufficient_data,
  fit_failure,
  rank_deficient,
  conditioning_failure,
  optimization_failure,
  method_failure,
  parse_error,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
  case ErrorKind::invalid_argument:
    return "invalid_argument";
  case ErrorKind::insufficient_data:
    return "insufficient_data";
  case ErrorKind::fit_failure:
    return "fit_failure";
  case ErrorKind::rank_deficient:
    return "rank_deficient";
  case ErrorKind::conditioning_failure:
    return "conditioning_failure";
  case ErrorKind::optimization_failure:
    return "optimization_failure";
  case ErrorKind::method_failure:
    return "method_failure";
  case ErrorKind::parse_error:
    return "parse_error";
  }
  return "unknown";
}

/// Every failure raised by the library carries a machine-readable kind.
class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string &message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string &message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string &message) {
  if (!condition) {
    throw Error(kind, message);
  }
}

} // namespace braggedge

#endif
