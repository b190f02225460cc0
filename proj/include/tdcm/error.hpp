#pragma once

#include <stdexcept>
#include <string>

namespace tdcm {

// Numeric values are mirrored by tdcm_status in tdcm.h.
enum class ErrorCode : int {
  Shape = 1,
  Parameter = 2,
  Configuration = 3,
  Domain = 4,
  State = 5,
  Evaluation = 6,
  Parse = 7,
  Persistence = 8,
  Numerical = 9,
  Io = 10,
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

#define TDCM_DEFINE_ERROR(Name, Code)                                     \
  class Name : public Error {                                             \
   public:                                                                \
    explicit Name(const std::string& what) : Error(ErrorCode::Code, what) {} \
  };

TDCM_DEFINE_ERROR(ShapeError, Shape)
TDCM_DEFINE_ERROR(ParameterError, Parameter)
TDCM_DEFINE_ERROR(ConfigError, Configuration)
TDCM_DEFINE_ERROR(DomainError, Domain)
TDCM_DEFINE_ERROR(StateError, State)
TDCM_DEFINE_ERROR(EvaluationError, Evaluation)
TDCM_DEFINE_ERROR(ParseError, Parse)
TDCM_DEFINE_ERROR(PersistenceError, Persistence)
TDCM_DEFINE_ERROR(NumericalError, Numerical)
TDCM_DEFINE_ERROR(IoError, Io)

#undef TDCM_DEFINE_ERROR

}  // namespace tdcm
