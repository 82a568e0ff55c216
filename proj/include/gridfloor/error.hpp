#pragma once

#include <stdexcept>
#include <string>

namespace gridfloor {

/// Base class for every failure raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define GRIDFLOOR_ERROR(Name)                 \
  class Name : public Error {                 \
   public:                                    \
    using Error::Error;                       \
  }

GRIDFLOOR_ERROR(InvalidNodeError);
GRIDFLOOR_ERROR(CoverageError);
GRIDFLOOR_ERROR(ParseError);
GRIDFLOOR_ERROR(OrderingError);
GRIDFLOOR_ERROR(MergeError);
GRIDFLOOR_ERROR(IncompleteGridError);
GRIDFLOOR_ERROR(SchemaError);
GRIDFLOOR_ERROR(IoError);
GRIDFLOOR_ERROR(FitError);
GRIDFLOOR_ERROR(CvError);
GRIDFLOOR_ERROR(ShapeError);
GRIDFLOOR_ERROR(DomainError);
GRIDFLOOR_ERROR(DivergenceError);
GRIDFLOOR_ERROR(CalibrationError);
GRIDFLOOR_ERROR(InputError);
GRIDFLOOR_ERROR(ReportError);
GRIDFLOOR_ERROR(AlignmentError);
GRIDFLOOR_ERROR(UsageError);

#undef GRIDFLOOR_ERROR

}  // namespace gridfloor
