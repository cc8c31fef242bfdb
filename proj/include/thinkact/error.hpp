#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace thinkact {

enum class Errc {
  kOversize,
  kEncoding,
  kInvalidTrajectory,
  kUnsupportedKind,
  kKeyCollision,
  kUnknownScope,
  kUnknownKey,
  kNotNeutralized,
  kDuplicateName,
  kInvalidSpec,
  kInvalidPolicy,
  kUnknownBuiltin,
  kNotTerminal,
  kDegenerate,
  kMissingComponent,
  kExtraComponent,
  kBadMix,
  kUnsatisfiable,
  kMismatch,
  kIo,
  kSchema,
  kEmptyTasks,
  kDiverged,
  kInvalidArgument,
  kUnknownTask,
};

std::string_view errc_name(Errc code) noexcept;

// All recoverable failures in the library are reported through this type.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message);

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace thinkact
