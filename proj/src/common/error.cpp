#include "thinkact/error.hpp"

namespace thinkact {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::kOversize: return "OVERSIZE";
    case Errc::kEncoding: return "ENCODING";
    case Errc::kInvalidTrajectory: return "INVALID_TRAJECTORY";
    case Errc::kUnsupportedKind: return "UNSUPPORTED_KIND";
    case Errc::kKeyCollision: return "KEY_COLLISION";
    case Errc::kUnknownScope: return "UNKNOWN_SCOPE";
    case Errc::kUnknownKey: return "UNKNOWN_KEY";
    case Errc::kNotNeutralized: return "NOT_NEUTRALIZED";
    case Errc::kDuplicateName: return "DUPLICATE_NAME";
    case Errc::kInvalidSpec: return "INVALID_SPEC";
    case Errc::kInvalidPolicy: return "INVALID_POLICY";
    case Errc::kUnknownBuiltin: return "UNKNOWN_BUILTIN";
    case Errc::kNotTerminal: return "NOT_TERMINAL";
    case Errc::kDegenerate: return "DEGENERATE";
    case Errc::kMissingComponent: return "MISSING_COMPONENT";
    case Errc::kExtraComponent: return "EXTRA_COMPONENT";
    case Errc::kBadMix: return "BAD_MIX";
    case Errc::kUnsatisfiable: return "UNSATISFIABLE";
    case Errc::kMismatch: return "MISMATCH";
    case Errc::kIo: return "IO";
    case Errc::kSchema: return "SCHEMA";
    case Errc::kEmptyTasks: return "EMPTY_TASKS";
    case Errc::kDiverged: return "DIVERGED";
    case Errc::kInvalidArgument: return "INVALID_ARGUMENT";
    case Errc::kUnknownTask: return "UNKNOWN_TASK";
  }
  return "UNKNOWN";
}

Error::Error(Errc code, const std::string& message)
    : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

}  // namespace thinkact
