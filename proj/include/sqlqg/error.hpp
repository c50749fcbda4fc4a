#pragma once

#include <stdexcept>
#include <string>

namespace sqlqg {

// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input files, bad record fields, dangling references.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(what) {}
};

// Invalid run configuration or CLI usage.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

}  // namespace sqlqg
