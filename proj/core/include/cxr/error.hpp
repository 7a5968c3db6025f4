#pragma once

#include <stdexcept>
#include <string>

namespace cxr {

// Base class for every error the toolkit raises on purpose.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Invalid argument values, out-of-range parameters, domain violations.
class ValueError : public Error {
 public:
  using Error::Error;
};

// Tensor shape or dimension mismatches.
class ShapeError : public ValueError {
 public:
  using ValueError::ValueError;
};

// Malformed text input: CSV metadata, JSON config, flag combinations.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Referenced dataset files that do not exist on disk.
class MissingDataError : public Error {
 public:
  using Error::Error;
};

// File system failures and binary format violations.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace cxr
