// Copyright (c) the videojscc authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0; see the LICENSE file.

#ifndef VIDEOJSCC_ERRORS_HPP
#define VIDEOJSCC_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace videojscc {

/// Malformed tensor/image dimensions (wrong rank, H or W not divisible by 16, ...).
class ShapeError : public std::invalid_argument {
 public:
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

/// Values outside their admissible range (pixel intensities outside [0,1], sigma <= 0, ...).
class RangeError : public std::domain_error {
 public:
  explicit RangeError(const std::string& what) : std::domain_error(what) {}
};

/// Symbol stream does not line up with the mask it claims to follow.
class FramingError : public std::runtime_error {
 public:
  explicit FramingError(const std::string& what) : std::runtime_error(what) {}
};

/// Requested symbol budget cannot cover the mandatory side information.
class InfeasibleBudgetError : public std::runtime_error {
 public:
  InfeasibleBudgetError(const std::string& what, double min_feasible_cbr)
      : std::runtime_error(what), min_feasible_cbr(min_feasible_cbr) {}
  double min_feasible_cbr;
};

/// CSV file whose header or rows do not match the documented schema.
class SchemaError : public std::runtime_error {
 public:
  explicit SchemaError(const std::string& what) : std::runtime_error(what) {}
};

/// Bad run configuration (missing key, unparsable value, mismatched checkpoint).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Training aborted because the loss became non-finite.
class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace videojscc

#endif  // VIDEOJSCC_ERRORS_HPP
