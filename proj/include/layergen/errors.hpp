// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace layergen {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid argument or configuration value.
class ConfigError : public Error {
public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

/// A required input file or run artifact is absent or fails integrity checks.
class MissingInputError : public Error {
public:
  explicit MissingInputError(const std::string& msg) : Error(msg) {}
};

/// File exists but cannot be parsed (malformed or truncated).
class ParseError : public Error {
public:
  explicit ParseError(const std::string& msg) : Error(msg) {}
};

/// Declared and actual tensor shapes disagree.
class ShapeError : public Error {
public:
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

/// File carries an unsupported format version.
class VersionError : public Error {
public:
  explicit VersionError(const std::string& msg) : Error(msg) {}
};

/// Non-finite values, solver non-convergence, or degenerate numerical input.
class NumericalError : public Error {
public:
  explicit NumericalError(const std::string& msg) : Error(msg) {}
};

/// Filesystem failure (unwritable directory, rename failure, ...).
class IoError : public Error {
public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

} // namespace layergen
