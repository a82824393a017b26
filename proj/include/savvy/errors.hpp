#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace savvy {

/// Base for every domain error raised by the library. The CLI maps these to
/// exit status 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GeometryError : public Error {
 public:
  using Error::Error;
};

/// Structured-input failure. `field()` carries the path of the offending
/// field (e.g. "sounding_object.key_frames.1:75") when one is known.
class ParseError : public Error {
 public:
  ParseError(std::string field, const std::string& what)
      : Error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}
  explicit ParseError(const std::string& what) : Error(what) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class CalibrationError : public Error {
 public:
  using Error::Error;
};

/// Segment too quiet for a coherence estimate.
class UndefinedCdrError : public Error {
 public:
  using Error::Error;
};

class ClusterError : public Error {
 public:
  using Error::Error;
};

class EmptyTrackError : public Error {
 public:
  using Error::Error;
};

class ModeError : public Error {
 public:
  using Error::Error;
};

class UnanswerableError : public Error {
 public:
  using Error::Error;
};

class ProviderError : public Error {
 public:
  using Error::Error;
};

}  // namespace savvy
