#pragma once

#include <stdexcept>
#include <string>

namespace smom {

enum class Errc {
  NotPsd,
  SingularSigma,
  ZeroMatrix,
  InvalidK,
  DimensionMismatch,
  TooFewBlocks,
  Infeasible,
  DirectionSearchFailed,
  SingularGram,
  NoConsensus,
  InvalidArgument,
  Config,
  Io,
  Parse,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::NotPsd: return "NotPsd";
    case Errc::SingularSigma: return "SingularSigma";
    case Errc::ZeroMatrix: return "ZeroMatrix";
    case Errc::InvalidK: return "InvalidK";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::TooFewBlocks: return "TooFewBlocks";
    case Errc::Infeasible: return "Infeasible";
    case Errc::DirectionSearchFailed: return "DirectionSearchFailed";
    case Errc::SingularGram: return "SingularGram";
    case Errc::NoConsensus: return "NoConsensus";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::Config: return "Config";
    case Errc::Io: return "Io";
    case Errc::Parse: return "Parse";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace smom
