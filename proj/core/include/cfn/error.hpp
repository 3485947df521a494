#pragma once

#include <stdexcept>
#include <string>

namespace cfn {

/// Malformed or inconsistent input data (files, ids, shapes of user-supplied tables).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values produced or consumed by the numerical pipeline.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cfn
