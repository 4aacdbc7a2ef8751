#pragma once

#include <stdexcept>
#include <string>

namespace seedcl {

// Base of every failure raised by the library. Callers that only care about
// "something went wrong" catch this; the CLI maps ConfigError to exit code 2
// and everything else to 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define SEEDCL_DEFINE_ERROR(Name)      \
  class Name : public Error {          \
   public:                             \
    using Error::Error;                \
  }

SEEDCL_DEFINE_ERROR(ConfigError);
SEEDCL_DEFINE_ERROR(IoFailure);
SEEDCL_DEFINE_ERROR(ShapeMismatch);
SEEDCL_DEFINE_ERROR(NumericFailure);

// synthgen
SEEDCL_DEFINE_ERROR(NoForegroundFound);
SEEDCL_DEFINE_ERROR(AmbiguousForeground);
SEEDCL_DEFINE_ERROR(PlacementFailure);

// net
SEEDCL_DEFINE_ERROR(UnknownHead);

// contrastive
SEEDCL_DEFINE_ERROR(ZeroVector);
SEEDCL_DEFINE_ERROR(EmptyQueue);
SEEDCL_DEFINE_ERROR(BatchTooLarge);

// probe
SEEDCL_DEFINE_ERROR(InsufficientData);
SEEDCL_DEFINE_ERROR(AllDiverged);

// metrics
SEEDCL_DEFINE_ERROR(UnknownLabel);
SEEDCL_DEFINE_ERROR(EmptyMatrix);

#undef SEEDCL_DEFINE_ERROR

}  // namespace seedcl
