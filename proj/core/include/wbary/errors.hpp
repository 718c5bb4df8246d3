#pragma once

#include <stdexcept>
#include <string>

namespace wbary {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define WBARY_DEFINE_ERROR(NAME) \
  class NAME : public Error {    \
   public:                       \
    using Error::Error;          \
  };

WBARY_DEFINE_ERROR(ParseError)           // malformed input file
WBARY_DEFINE_ERROR(InvariantError)       // violated type invariant
WBARY_DEFINE_ERROR(DimensionError)       // wrong ambient dimension
WBARY_DEFINE_ERROR(DomainError)          // domain boxes differ or point escapes the box
WBARY_DEFINE_ERROR(RangeError)           // argument outside its admissible range
WBARY_DEFINE_ERROR(AbsContinuityError)   // operation needs an absolutely continuous measure
WBARY_DEFINE_ERROR(SizeError)            // instance above the configured cap
WBARY_DEFINE_ERROR(OracleScopeError)     // brute-force oracle asked outside its scope
WBARY_DEFINE_ERROR(ScaleError)           // nonpositive transform scale
WBARY_DEFINE_ERROR(ConstraintError)      // dual family violates the zero-sum constraint
WBARY_DEFINE_ERROR(FamilyError)          // family is not of the required kind
WBARY_DEFINE_ERROR(GridMismatchError)    // grids expected to be identical differ
WBARY_DEFINE_ERROR(NoDecreaseError)      // objective trace increased (solver bug)
WBARY_DEFINE_ERROR(InsufficientDataError)// not enough data for a statistical fit
WBARY_DEFINE_ERROR(EfficiencyError)      // rejection sampler acceptance rate collapsed
WBARY_DEFINE_ERROR(UsageError)           // bad command-line usage

#undef WBARY_DEFINE_ERROR

}  // namespace wbary
