#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace lpci {

// Every library failure derives from Error so callers can catch one type and
// still branch on the concrete category.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class SchemaError : public Error { public: using Error::Error; };
class DuplicateError : public Error { public: using Error::Error; };
class UnbalancedError : public Error { public: using Error::Error; };
class ArgumentError : public Error { public: using Error::Error; };
class DegenerateScaleError : public Error { public: using Error::Error; };
class ConfigError : public Error { public: using Error::Error; };
class StateError : public Error { public: using Error::Error; };
class ModeError : public Error { public: using Error::Error; };
class FetchError : public Error { public: using Error::Error; };

/// Failure inside one experiment stage; what() is prefixed with "[stage] ".
class StageError : public Error {
public:
  StageError(std::string stage, const std::string& message)
      : Error("[" + stage + "] " + message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

private:
  std::string stage_;
};

}  // namespace lpci
