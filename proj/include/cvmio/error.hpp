#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cvmio {

enum class Errc {
  ZeroSize,
  NotShared,
  AlreadyTornDown,
  DeviceAccessDenied,
  OutOfBounds,
  UnknownRegion,
  BadCapacity,
  RingFull,
  AddressNotShared,
  ArenaTooSmall,
  PoolExhausted,
  ForeignBuffer,
  OversizePacket,
  Oversize,
  SeqExhausted,
  AuthFail,
  Malformed,
  AlreadyAttached,
  SameConfig,
  MissingBaseline,
  ZeroBaseline,
  ZeroArgument,
  ConfigInvalid,
  Empty,
  BadQuantile,
  IoError,
  SymmetryRequired,
  ParseError,
};

constexpr std::string_view to_string(Errc e) {
  switch (e) {
    case Errc::ZeroSize: return "ZeroSize";
    case Errc::NotShared: return "NotShared";
    case Errc::AlreadyTornDown: return "AlreadyTornDown";
    case Errc::DeviceAccessDenied: return "DeviceAccessDenied";
    case Errc::OutOfBounds: return "OutOfBounds";
    case Errc::UnknownRegion: return "UnknownRegion";
    case Errc::BadCapacity: return "BadCapacity";
    case Errc::RingFull: return "RingFull";
    case Errc::AddressNotShared: return "AddressNotShared";
    case Errc::ArenaTooSmall: return "ArenaTooSmall";
    case Errc::PoolExhausted: return "PoolExhausted";
    case Errc::ForeignBuffer: return "ForeignBuffer";
    case Errc::OversizePacket: return "OversizePacket";
    case Errc::Oversize: return "Oversize";
    case Errc::SeqExhausted: return "SeqExhausted";
    case Errc::AuthFail: return "AuthFail";
    case Errc::Malformed: return "Malformed";
    case Errc::AlreadyAttached: return "AlreadyAttached";
    case Errc::SameConfig: return "SameConfig";
    case Errc::MissingBaseline: return "MissingBaseline";
    case Errc::ZeroBaseline: return "ZeroBaseline";
    case Errc::ZeroArgument: return "ZeroArgument";
    case Errc::ConfigInvalid: return "ConfigInvalid";
    case Errc::Empty: return "Empty";
    case Errc::BadQuantile: return "BadQuantile";
    case Errc::IoError: return "IoError";
    case Errc::SymmetryRequired: return "SymmetryRequired";
    case Errc::ParseError: return "ParseError";
  }
  return "Unknown";
}

/// Every recoverable failure in the library is reported as an Error carrying
/// one of the codes above.
class Error : public std::runtime_error {
 public:
  explicit Error(Errc code, const std::string& detail = {})
      : std::runtime_error(detail.empty() ? std::string(to_string(code))
                                          : std::string(to_string(code)) + ": " + detail),
        code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace cvmio
