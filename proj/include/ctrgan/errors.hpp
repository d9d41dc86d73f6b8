#pragma once

#include <stdexcept>
#include <string>

namespace ctrgan {

// Bad inputs, missing files, malformed datasets. CLI maps this to exit 2.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values where finite ones are required. CLI maps this to exit 3.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ctrgan
