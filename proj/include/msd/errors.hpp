// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace msd {

/// Tensor/vector dimensions do not line up.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A scalar argument is outside its documented domain.
struct ParamError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A computation produced (or received) non-finite values.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A file could not be parsed; message names the offending location.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A configuration file is invalid; message names the offending key.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A referenced input file does not exist.
struct MissingInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace msd
