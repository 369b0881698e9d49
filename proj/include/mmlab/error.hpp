#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mmlab {

/// Every failure the library reports through exceptions carries one of these.
enum class Errc {
  SchedulingInPast,
  UnknownDistribution,
  Unreachable,
  UnassignedAddress,
  TunnelDepthExceeded,
  BindingRefused,
  NoBinding,
  NotAMember,
  NoTree,
  NoMapAdvertised,
  MulticastUnaware,
  NotAssociated,
  PreviousMapUnreachable,
  RateOutOfRange,
  NonMonotoneTimes,
  RepeatedSubnet,
  UnknownStream,
  InvalidEmail,
  NotRegistered,
  SessionMismatch,
  NoMxRecord,
  DirectoryUnreachable,
  Expired,
  ParseError,
  ValidationError,
  AuditFailure,
};

std::string_view errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace mmlab
