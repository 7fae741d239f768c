// Copyright 2026 The doxbench Authors
// SPDX-License-Identifier: Apache-2.0

/// \file measurement.hpp
/// \brief Core measurement vocabulary: protocol identifiers, timing
/// breakdowns, byte accounting, and the per-exchange QueryOutcome.

#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "doxbench/common.hpp"

namespace doxbench
{

enum class ProtocolKind : std::uint8_t
{
  DoUDP = 0,
  DoTCP = 1,
  DoT = 2,
  DoH = 3,
  DoQ = 4,
};

constexpr std::array<ProtocolKind, 5> kAllProtocols = {
    ProtocolKind::DoUDP, ProtocolKind::DoTCP, ProtocolKind::DoT,
    ProtocolKind::DoH, ProtocolKind::DoQ};

inline const char *protocolName(ProtocolKind p)
{
  switch (p)
  {
    case ProtocolKind::DoUDP: return "doudp";
    case ProtocolKind::DoTCP: return "dotcp";
    case ProtocolKind::DoT: return "dot";
    case ProtocolKind::DoH: return "doh";
    case ProtocolKind::DoQ: return "doq";
  }
  return "?";
}

inline std::optional<ProtocolKind> protocolFromName(std::string_view name)
{
  std::string n = toLower(name);
  for (auto p : kAllProtocols)
  {
    if (n == protocolName(p))
    {
      return p;
    }
  }
  return std::nullopt;
}

/// Default service port for a protocol (DoQ per RFC 9250).
inline std::uint16_t defaultPort(ProtocolKind p)
{
  switch (p)
  {
    case ProtocolKind::DoUDP:
    case ProtocolKind::DoTCP: return 53;
    case ProtocolKind::DoT: return 853;
    case ProtocolKind::DoH: return 443;
    case ProtocolKind::DoQ: return 853;
  }
  return 0;
}

/// Alternate DoQ ports probed during discovery sweeps.
constexpr std::array<std::uint16_t, 3> kDoqScanPorts = {853, 784, 8853};

/// ALPN preference for DNS-over-QUIC: the standard identifier first, then
/// every draft identifier from doq-i11 down to doq-i00.
inline std::vector<std::string> doqAlpnPreference()
{
  std::vector<std::string> out{"doq"};
  for (int i = 11; i >= 0; --i)
  {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "doq-i%02d", i);
    out.emplace_back(buf);
  }
  return out;
}

struct TimingBreakdown
{
  /// Absent exactly for DoUDP, which has no transport handshake.
  std::optional<double> handshakeMs;
  double resolveMs = 0.0;
};

enum class AccountingMode : std::uint8_t
{
  TransportPayload = 0, ///< sum of transport PDUs written/read
  EstimatedIpPayload = 1, ///< adds nominal per-PDU header sizes
};

inline const char *accountingModeName(AccountingMode m)
{
  return m == AccountingMode::TransportPayload ? "transport-payload" : "estimated-ip-payload";
}

/// \brief Byte counters for one measurement, split into handshake and DNS
/// phases and by direction (c2r = client to resolver).
struct ByteAccounting
{
  std::uint64_t hsC2rBytes = 0;
  std::uint64_t hsR2cBytes = 0;
  std::uint64_t queryBytes = 0;
  std::uint64_t responseBytes = 0;
  std::uint64_t hsC2rPdus = 0;
  std::uint64_t hsR2cPdus = 0;
  std::uint64_t queryPdus = 0;
  std::uint64_t responsePdus = 0;
  AccountingMode mode = AccountingMode::TransportPayload;

  std::uint64_t total() const { return hsC2rBytes + hsR2cBytes + queryBytes + responseBytes; }

  /// Re-express the payload counters with nominal per-PDU transport headers
  /// added (UDP 8, TCP 20). QUIC PDUs are UDP datagrams.
  ByteAccounting withEstimatedIpHeaders(std::uint32_t perPduOverhead) const
  {
    ByteAccounting out = *this;
    out.hsC2rBytes += perPduOverhead * hsC2rPdus;
    out.hsR2cBytes += perPduOverhead * hsR2cPdus;
    out.queryBytes += perPduOverhead * queryPdus;
    out.responseBytes += perPduOverhead * responsePdus;
    out.mode = AccountingMode::EstimatedIpPayload;
    return out;
  }
};

/// \brief Everything observed during one timed DNS exchange.
struct QueryOutcome
{
  ProtocolKind protocol = ProtocolKind::DoUDP;
  TimingBreakdown timing;
  ByteAccounting bytes;
  /// Monotonic wall duration of the whole operation, including gaps between
  /// handshake and query phases.
  double totalMs = 0.0;
  std::optional<std::string> tlsVersion;
  std::optional<std::uint32_t> quicVersion;
  std::optional<std::string> doqAlpn;
  bool resumed = false;
  bool zeroRttUsed = false;
  std::uint32_t retransmissions = 0;
  std::optional<std::uint8_t> rcode;
  std::optional<Errc> error;
  /// Free-form annotation, e.g. "resumption-unavailable" when a warm leg
  /// harvested no ticket.
  std::optional<std::string> note;

  bool ok() const { return !error.has_value(); }
};

} // namespace doxbench
