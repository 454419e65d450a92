#pragma once

#include <stdexcept>
#include <string>

namespace ioff {

// Bad caller input: zero sizes, out-of-range ratios, mismatched lengths.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// The configuration cannot be realized on the given profile, e.g. the fast
// tier cannot hold a single dynamic subgroup.
class InfeasibleConfiguration : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A target refused an action, or the lane runtime saw a consistency
// violation while executing one.
class SchedulingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A timeline or scenario failed structural validation.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ioff
