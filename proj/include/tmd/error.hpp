#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tmd {

/// Machine-readable failure codes shared by every module.
enum class ErrorCode {
  // core_model
  MissingImage,
  MaskMismatch,
  EmptyPrompt,
  InvalidRequest,
  InvalidDefectSpec,
  UnknownMaterial,
  UnknownDefect,
  InvalidLibrary,
  // dataset_forge
  EmptyInput,
  EmptyCaption,
  UnknownTemplate,
  InvalidConfig,
  ExhaustedAttempts,
  DuplicateEntry,
  CountMismatch,
  SchemaViolation,
  IoFailure,
  // prompt_tuner
  UntunablePrompt,
  NoDefectFound,
  // model_gateway
  NoBackendForKind,
  BackendUnavailable,
  Timeout,
  // texture_processor
  EmptyImage,
  DimensionMismatch,
  CorruptFile,
  // metering
  UnknownBackendRate,
  // sus_eval
  InvalidScore,
  // service
  ConfigInvalid,
  AddressInUse,
  DuplicateRequestId,
  NotFound,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace tmd
