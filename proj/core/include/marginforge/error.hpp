#ifndef MARGINFORGE_ERROR_HPP_
#define MARGINFORGE_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace marginforge {

enum class ErrorCode {
  kZeroNorm,
  kDimMismatch,
  kEmptyInput,
  kInvalidArgument,
  kIndexOutOfRange,
  kLambdaOutOfRange,
  kShapeMismatch,
  kNonSquare,
  kUnknownId,
  kDuplicateId,
  kParseError,
  kChecksumError,
  kIoError,
  kConfigError,
  kUnknownKey,
  kTypeError,
  kMissingRequired,
  kNumericError,
};

std::string_view error_code_name(ErrorCode code);

// All library failures surface as this exception; what() is prefixed with
// the code name so CLI error output stays greppable.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace marginforge

#endif  // MARGINFORGE_ERROR_HPP_
