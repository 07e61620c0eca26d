#include "mtid/error.hpp"

namespace mtid {

const char* to_string(Errc code) {
  switch (code) {
    case Errc::kInvalidArgument: return "invalid argument";
    case Errc::kShapeMismatch: return "shape mismatch";
    case Errc::kInfeasibleWorld: return "infeasible world";
    case Errc::kTraceTooShort: return "trace too short";
    case Errc::kUnsplittableTask: return "unsplittable task";
    case Errc::kScheduleTooShort: return "schedule too short";
    case Errc::kOutOfRange: return "out of range";
    case Errc::kDegenerateHorizon: return "degenerate horizon";
    case Errc::kEmptyScope: return "empty task scope";
    case Errc::kEmptyInput: return "empty input";
    case Errc::kVersionMismatch: return "version mismatch";
    case Errc::kTruncatedFile: return "truncated file";
    case Errc::kChecksumMismatch: return "checksum mismatch";
    case Errc::kMalformedFile: return "malformed file";
    case Errc::kIo: return "i/o error";
    case Errc::kNonFiniteLoss: return "non-finite loss";
  }
  return "unknown error";
}

}  // namespace mtid
