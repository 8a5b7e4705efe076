#pragma once

#include <stdexcept>
#include <string>

namespace coinfer {

// Base of every domain error raised by the library. The CLI maps these to
// exit status 1; anything else escaping is a bug.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
  using Error::Error;
};

class ValidationError : public Error {
public:
  using Error::Error;
};

// Argument outside the domain of an operation (index, ratio, probability).
class RangeError : public Error {
public:
  using Error::Error;
};

class OverflowError : public Error {
public:
  using Error::Error;
};

} // namespace coinfer
