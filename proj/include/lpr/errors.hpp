#pragma once

#include <stdexcept>
#include <string>

namespace lpr {

// Bad input: malformed files, shape or vocabulary mismatches, invalid
// configuration values. The CLI maps this to exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failure at runtime (NaN/inf loss). The CLI maps this to exit 3.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DivergenceError : public NumericError {
 public:
  DivergenceError(long iteration, const std::string& what)
      : NumericError(what), iteration_(iteration) {}
  long iteration() const { return iteration_; }

 private:
  long iteration_;
};

}  // namespace lpr
