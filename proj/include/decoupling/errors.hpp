#pragma once

#include <stdexcept>
#include <string>

namespace decoupling {

// Malformed or out-of-domain arguments. The CLI maps this to exit code 2.
class InputError : public std::invalid_argument {
 public:
  explicit InputError(const std::string& what) : std::invalid_argument(what) {}
};

// All-zero or otherwise degenerate input where a ratio would be 0/0.
class DegenerateInputError : public InputError {
 public:
  explicit DegenerateInputError(const std::string& what)
      : InputError("degenerate input: " + what) {}
};

// Exact enumeration would exceed its configured state cap. Exit code 3.
class CapacityError : public std::length_error {
 public:
  explicit CapacityError(const std::string& what) : std::length_error(what) {}
};

inline void require(bool ok, const std::string& message) {
  if (!ok) throw InputError(message);
}

}  // namespace decoupling
