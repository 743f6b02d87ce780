#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace stunet {

// Base for every error the library raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes, extents or arguments that an operation cannot accept.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// An ArchConfig / TrainPlan / descriptor field failed validation.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error(field + ": " + message), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// A weight store does not provide what the graph declares.
class MissingParameter : public Error {
 public:
  explicit MissingParameter(std::vector<std::string> names);

  const std::vector<std::string>& names() const noexcept { return names_; }

 private:
  std::vector<std::string> names_;
};

// Two parameter sets disagree on tensor shapes.
class ShapeMismatch : public Error {
 public:
  struct Entry {
    std::string name;
    std::string expected;
    std::string actual;
  };

  explicit ShapeMismatch(std::vector<Entry> entries);

  const std::vector<Entry>& entries() const noexcept { return entries_; }

 private:
  std::vector<Entry> entries_;
};

// Corrupt or truncated files. `section` names the part that failed to parse.
class FormatError : public Error {
 public:
  FormatError(std::string section, const std::string& message)
      : Error(section + ": " + message), section_(std::move(section)) {}

  const std::string& section() const noexcept { return section_; }

 private:
  std::string section_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace stunet
