#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>
#include <string_view>

namespace hoi {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

enum class ErrorCode {
  InvalidArgument,
  AngleNearPi,
  DegenerateConfiguration,
  NoConsensus,
  FrameMismatch,
  UnsortedSamples,
  DivergenceDetected,
  IoFailure,
  NoSurface,
  EmptyInput,
  DimensionMismatch,
  ParseError,
};

std::string_view to_string(ErrorCode code);

// Validation errors are caused by bad inputs; everything else is a runtime
// failure. The CLI maps the two classes onto different exit codes.
bool is_validation_error(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

void log_warning(std::string_view msg);
void log_info(std::string_view msg);
void set_log_quiet(bool quiet);

}  // namespace hoi
