#pragma once

#include <stdexcept>
#include <string>

namespace ditto {

// Base for every error raised by the library. Subclasses name the failure
// category so callers can react to e.g. bad data vs. a numeric blow-up.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define DITTO_DEFINE_ERROR(Name)          \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  }

DITTO_DEFINE_ERROR(ShapeError);
DITTO_DEFINE_ERROR(LabelError);
DITTO_DEFINE_ERROR(ParamError);
DITTO_DEFINE_ERROR(NumericError);
DITTO_DEFINE_ERROR(LookupError);
DITTO_DEFINE_ERROR(StateError);
DITTO_DEFINE_ERROR(DataError);
DITTO_DEFINE_ERROR(ConfigError);
DITTO_DEFINE_ERROR(InputError);

#undef DITTO_DEFINE_ERROR

// Malformed input file; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace ditto
