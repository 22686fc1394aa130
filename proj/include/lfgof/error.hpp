#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lfgof {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A required column is missing or the column-role mapping is malformed.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// A cell failed numeric validation. Row numbers are 1-based data rows.
class ValidationError : public Error {
 public:
  ValidationError(const std::string& what, std::size_t row, std::string column)
      : Error(what), row_(row), column_(std::move(column)) {}

  std::size_t row() const noexcept { return row_; }
  const std::string& column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::string column_;
};

class EmptyTableError : public Error {
 public:
  using Error::Error;
};

/// A size precondition failed (k too large, n_calib >= N, ...).
class SizeError : public Error {
 public:
  using Error::Error;
};

/// An invalid configuration value (empty interval, level outside (0,1), ...).
class SpecError : public Error {
 public:
  using Error::Error;
};

class BuildError : public Error {
 public:
  using Error::Error;
};

class QueryError : public Error {
 public:
  using Error::Error;
};

class TransformError : public Error {
 public:
  TransformError(const std::string& what, std::size_t parameter)
      : Error(what), parameter_(parameter) {}

  std::size_t parameter() const noexcept { return parameter_; }

 private:
  std::size_t parameter_;
};

/// Raised when the simulator fails for one particle; carries the particle
/// position in the input order.
class ResimulationError : public Error {
 public:
  ResimulationError(const std::string& what, std::size_t particle)
      : Error(what), particle_(particle) {}

  std::size_t particle() const noexcept { return particle_; }

 private:
  std::size_t particle_;
};

}  // namespace lfgof
