// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace presence {

/// Argument outside an operation's mathematical domain.
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input record rejected by a range or shape check.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Document failed schema validation; path() names the offending field.
class SchemaError : public std::runtime_error {
 public:
  SchemaError(std::string path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class VersionError : public std::runtime_error {
 public:
  VersionError(int expected, int got)
      : std::runtime_error("version mismatch: expected " + std::to_string(expected) +
                           ", got " + std::to_string(got)),
        expected_(expected),
        got_(got) {}
  int expected() const noexcept { return expected_; }
  int got() const noexcept { return got_; }

 private:
  int expected_;
  int got_;
};

/// Operation not valid in the object's current state.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PermissionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConnectivityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Integrator produced a non-finite coordinate.
class IntegrationBlowup : public std::runtime_error {
 public:
  explicit IntegrationBlowup(std::size_t bead)
      : std::runtime_error("integration blowup at bead " + std::to_string(bead)), bead_(bead) {}
  std::size_t bead() const noexcept { return bead_; }

 private:
  std::size_t bead_;
};

}  // namespace presence
