#pragma once

#include <stdexcept>
#include <string>

namespace nsi {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or out-of-range caller input (bad index, infeasible parameters,
/// unparsable file). The CLI maps this to exit code 2.
class InputError : public Error {
 public:
  using Error::Error;
};

/// The estimand cannot be computed from the data at hand. The CLI maps this
/// family to exit code 3.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

class EmptyDonorsError : public InfeasibleError {
 public:
  EmptyDonorsError() : InfeasibleError("donor set is empty") {}
  explicit EmptyDonorsError(const std::string& what) : InfeasibleError(what) {}
};

class DegenerateRankError : public InfeasibleError {
 public:
  using InfeasibleError::InfeasibleError;
};

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int input_error = 2;
inline constexpr int infeasible = 3;
inline constexpr int test_failure = 4;
}  // namespace exit_code

}  // namespace nsi
