#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fieldsync {

enum class ErrorCode {
  kMalformedDocument,
  kInvalidSchema,
  kMissingField,
  kTypeMismatch,
  kOutOfRange,
  kBadCoordinate,
  kInvalidDeviceId,
  kSchemaMismatch,
  kPayloadConflict,
  kUnknownRecord,
  kPeerUnreachable,
  kUnknownField,
  kNonNumericField,
  kMissingValue,
  kDegenerate,
  kMalformedScenario,
  kInvalidInterval,
  kConfigError,
  kIoError,
};

std::string_view to_string(ErrorCode code);

// All library failures surface as this exception. `subject` names the
// offending item (a field name, a record id, a config key) and may be empty.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string subject, const std::string& detail = {});

  ErrorCode code() const noexcept { return code_; }
  const std::string& subject() const noexcept { return subject_; }

 private:
  ErrorCode code_;
  std::string subject_;
};

}  // namespace fieldsync
