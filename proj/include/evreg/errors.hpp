#pragma once

#include <stdexcept>

namespace evreg {

// Malformed or inconsistent input data (files, CSV rows, config values).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace evreg
