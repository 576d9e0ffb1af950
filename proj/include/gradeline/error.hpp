#pragma once

#include <stdexcept>
#include <string>

namespace gradeline {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Precondition violated by the caller (bad window size, mismatched dims...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Unreadable, truncated or unsupported file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Reference to an item, file or key that does not exist.
class LookupError : public Error {
 public:
  using Error::Error;
};

}  // namespace gradeline
