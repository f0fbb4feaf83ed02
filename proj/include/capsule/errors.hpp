#pragma once

#include <stdexcept>
#include <string>

namespace capsule {

// Root of every error the library throws. Each subclass names one failure
// category so callers (and the CLI) can react without parsing messages.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error { using Error::Error; };
class AxisError : public Error { using Error::Error; };
class ContractError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class NumericError : public Error { using Error::Error; };
class LabelError : public Error { using Error::Error; };
class DecodeError : public Error { using Error::Error; };
class DataError : public Error { using Error::Error; };
class SpecError : public Error { using Error::Error; };
class IoError : public Error { using Error::Error; };
class UndefinedMetricError : public Error { using Error::Error; };

class CheckpointError : public Error {
 public:
  enum class Kind {
    bad_magic,
    version_mismatch,
    truncated,
    malformed_header,
    unknown_tensor,
    missing_tensor,
    duplicate_tensor,
    shape_mismatch,
    trailing_data,
  };

  CheckpointError(Kind kind, const std::string& what)
      : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

const char* to_string(CheckpointError::Kind kind) noexcept;

}  // namespace capsule
