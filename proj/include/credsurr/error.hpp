#pragma once

#include <stdexcept>
#include <string>

namespace credsurr {

// Error classes map onto the CLI exit codes: config (2), data (3), numeric (4).
enum class ErrorClass { Config, Data, Numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, const std::string& what) : std::runtime_error(what), cls_(cls) {}
  ErrorClass error_class() const noexcept { return cls_; }

 private:
  ErrorClass cls_;
};

#define CREDSURR_DEFINE_ERROR(Name, Cls)                                        \
  class Name : public Error {                                                   \
   public:                                                                      \
    explicit Name(const std::string& what) : Error(ErrorClass::Cls, what) {}    \
  };

// observation outside the support of a family
CREDSURR_DEFINE_ERROR(DomainError, Data)
// distribution or model parameter outside its valid range
CREDSURR_DEFINE_ERROR(ParameterError, Config)
CREDSURR_DEFINE_ERROR(ParseError, Data)
CREDSURR_DEFINE_ERROR(SequencingError, Data)
CREDSURR_DEFINE_ERROR(ConfigError, Config)
CREDSURR_DEFINE_ERROR(UnsupportedError, Data)
CREDSURR_DEFINE_ERROR(DivergenceError, Numeric)
CREDSURR_DEFINE_ERROR(DegenerateWeightsError, Numeric)
CREDSURR_DEFINE_ERROR(NumericError, Numeric)
CREDSURR_DEFINE_ERROR(IoError, Data)

#undef CREDSURR_DEFINE_ERROR

}  // namespace credsurr
