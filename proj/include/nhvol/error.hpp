#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nhvol {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t position)
      : Error(message + " at position " + std::to_string(position)), position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

class UndeclaredIdentifier : public ParseError {
 public:
  UndeclaredIdentifier(const std::string& name, std::size_t position)
      : ParseError("undeclared identifier '" + name + "'", position), name_(name) {}
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

/// Division by zero, logarithm of a nonpositive value, and friends.
class DomainError : public Error {
 public:
  DomainError(const std::string& message, std::string subexpression)
      : Error(message + " in '" + subexpression + "'"), subexpression_(std::move(subexpression)) {}
  const std::string& subexpression() const noexcept { return subexpression_; }

 private:
  std::string subexpression_;
};

/// Every candidate sample was rejected by the domain guards.
class UndecidableError : public Error {
 public:
  using Error::Error;
};

class DegreeError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Schema or semantic validation failure; carries a JSON-pointer-like path.
class ValidationError : public Error {
 public:
  ValidationError(const std::string& path, const std::string& message)
      : Error(path + ": " + message), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class PositivityError : public Error {
 public:
  using Error::Error;
};

class DegenerateRealization : public Error {
 public:
  using Error::Error;
};

class ConstraintViolation : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class NotApplicable : public Error {
 public:
  using Error::Error;
};

/// No admissible staircase path joins the base point to the target.
class RoutingError : public Error {
 public:
  using Error::Error;
};

class IntegrationError : public Error {
 public:
  IntegrationError(const std::string& message, double last_good_time)
      : Error(message), last_good_time_(last_good_time) {}
  double last_good_time() const noexcept { return last_good_time_; }

 private:
  double last_good_time_;
};

}  // namespace nhvol
