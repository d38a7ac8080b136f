#pragma once

#include <stdexcept>
#include <string>

namespace gansfer {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define GANSFER_DEFINE_ERROR(Name)          \
  class Name : public Error {               \
   public:                                  \
    using Error::Error;                     \
  }

GANSFER_DEFINE_ERROR(ShapeMismatch);
GANSFER_DEFINE_ERROR(ZeroVariance);
GANSFER_DEFINE_ERROR(OutOfBounds);
GANSFER_DEFINE_ERROR(EmptyForeground);
GANSFER_DEFINE_ERROR(InvalidSample);
GANSFER_DEFINE_ERROR(NonDyadic);
GANSFER_DEFINE_ERROR(DimensionMismatch);
GANSFER_DEFINE_ERROR(AlreadyAtTarget);
GANSFER_DEFINE_ERROR(UnknownLayer);
GANSFER_DEFINE_ERROR(ScheduleExhaustsFinalLayer);
GANSFER_DEFINE_ERROR(BadBudget);
GANSFER_DEFINE_ERROR(EmptyPool);
GANSFER_DEFINE_ERROR(BadCount);
GANSFER_DEFINE_ERROR(DegenerateClass);
GANSFER_DEFINE_ERROR(DegenerateVariance);
GANSFER_DEFINE_ERROR(MissingResults);
GANSFER_DEFINE_ERROR(ConfigError);
GANSFER_DEFINE_ERROR(IoError);
GANSFER_DEFINE_ERROR(PhaseOrderError);

#undef GANSFER_DEFINE_ERROR

}  // namespace gansfer
