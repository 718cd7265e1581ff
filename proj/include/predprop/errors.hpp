// Copyright 2026 The PredProp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PREDPROP_ERRORS_HPP_
#define PREDPROP_ERRORS_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace predprop {

/// Base class for all errors thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Incompatible matrix/vector shapes or layer indices out of range.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value (negative learning rate, unknown mode, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure: non-finite state, non-SPD precision, non-convergence
/// where convergence is contractual.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. `offset` is a byte offset for binary/JSON inputs
/// and a 1-based line number for CSV inputs (see `offset_is_line`).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset, bool offset_is_line = false)
      : Error(what), offset_(offset), offset_is_line_(offset_is_line) {}

  std::size_t offset() const { return offset_; }
  bool offset_is_line() const { return offset_is_line_; }

 private:
  std::size_t offset_;
  bool offset_is_line_;
};

/// Filesystem-level failure (missing file, unwritable path).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace predprop

#endif  // PREDPROP_ERRORS_HPP_
