#ifndef SEG_ERRORS_HPP
#define SEG_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace seg {

class SegError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public SegError {
 public:
  using SegError::SegError;
};

// Averaged matrix could not be factorized, typically a mu = 0 problem.
class SingularSystem : public SegError {
 public:
  using SegError::SegError;
};

class Unsupported : public SegError {
 public:
  using SegError::SegError;
};

// Bad user input: spectrum bounds, stepsizes above their caps, malformed specs.
class ValidationError : public SegError {
 public:
  using SegError::SegError;
};

class FormatError : public SegError {
 public:
  using SegError::SegError;
};

class DivergenceError : public SegError {
 public:
  using SegError::SegError;
};

}  // namespace seg

#endif
