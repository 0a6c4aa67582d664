#pragma once

#include <stdexcept>
#include <string>

namespace addmodel {

// Bad arguments or malformed input data. The CLI maps this to exit code 2.
class InputError : public std::invalid_argument {
 public:
  explicit InputError(const std::string& what) : std::invalid_argument(what) {}
};

// A factorization or solve failed on data that passed validation. Exit code 1.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace addmodel
