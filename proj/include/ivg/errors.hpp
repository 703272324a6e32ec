#pragma once

#include <stdexcept>
#include <string>

namespace ivg {

/// Bad configuration or shape contract (exit code 2 at the CLI).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or inconsistent on-disk data. Carries the offending record id when known.
class DataError : public std::runtime_error {
 public:
  DataError(const std::string& record_id, const std::string& what)
      : std::runtime_error(record_id.empty() ? what : "record '" + record_id + "': " + what),
        record_id_(record_id) {}
  const std::string& record_id() const noexcept { return record_id_; }

 private:
  std::string record_id_;
};

/// Non-finite values encountered during computation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ivg
