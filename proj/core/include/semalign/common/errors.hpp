#pragma once

#include <stdexcept>
#include <string>

namespace semalign {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data that is malformed or violates a data contract.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Failure talking to an external chat or embedding service.
class ServiceError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or gradient during optimization.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace semalign
