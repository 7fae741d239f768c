// Copyright 2026 The doxbench Authors
// SPDX-License-Identifier: Apache-2.0

/// \file expectation.hpp
/// \brief Closed-form model of handshake round-trip counts per protocol,
/// including the QUIC traffic-amplification effect on fresh handshakes.
/// Used both as the oracle for the integration suite and as the timing
/// engine of the page-load simulator.

#pragma once

#include <cstdint>

#include "doxbench/common.hpp"
#include "doxbench/measurement.hpp"

namespace doxbench
{

enum class TlsVersion
{
  none,
  v1_2,
  v1_3,
};

inline const char *tlsVersionName(TlsVersion v)
{
  switch (v)
  {
    case TlsVersion::v1_2:
      return "TLSv1.2";
    case TlsVersion::v1_3:
      return "TLSv1.3";
    case TlsVersion::none:
      break;
  }
  return "none";
}

struct ExpectationInput
{
  ProtocolKind protocol = ProtocolKind::DoUDP;
  TlsVersion tlsVersion = TlsVersion::none;
  bool resumed = false;
  bool zeroRtt = false;
  bool tfo = false;
  std::uint64_t certFlightBytes = 0;
  std::uint64_t clientInitialBytes = 0;

  bool valid() const
  {
    if (zeroRtt && (!resumed || tlsVersion != TlsVersion::v1_3))
    {
      return false;
    }
    return true;
  }
};

/// True when a server flight of the given size would exceed the allowance of
/// three times the bytes received from an unvalidated client. The boundary is
/// strict: exactly 3x is still permitted.
inline bool amplificationLimited(std::uint64_t clientInitialBytes, std::uint64_t serverFlightBytes)
{
  return serverFlightBytes > 3 * clientInitialBytes;
}

/// \brief Expected handshake round-trips before application data can be sent.
///
/// DoUDP is connectionless (0). DoTCP completes in 1 round-trip (0.5 with
/// TFO, which no measured resolver supports). DoQ combines transport and
/// crypto into 1 round-trip, plus 1 when a fresh handshake's certificate
/// flight trips the amplification allowance; with accepted 0-RTT the wait
/// disappears entirely. DoT/DoH pay the TCP round-trip plus 1 (TLS 1.3) or
/// 2 (TLS 1.2); accepted 0-RTT saves one.
inline double expectedHandshakeRtts(const ExpectationInput &x)
{
  switch (x.protocol)
  {
    case ProtocolKind::DoUDP:
      return 0.0;
    case ProtocolKind::DoTCP:
      return x.tfo ? 0.5 : 1.0;
    case ProtocolKind::DoQ:
    {
      if (x.zeroRtt)
      {
        return 0.0;
      }
      double rtts = 1.0;
      if (!x.resumed && amplificationLimited(x.clientInitialBytes, x.certFlightBytes))
      {
        rtts += 1.0;
      }
      return rtts;
    }
    case ProtocolKind::DoT:
    case ProtocolKind::DoH:
    {
      double rtts = (x.tlsVersion == TlsVersion::v1_2) ? 3.0 : 2.0;
      if (x.zeroRtt)
      {
        rtts -= 1.0;
      }
      return rtts;
    }
  }
  return 0.0;
}

/// Linear latency model over the round-trip count.
inline double predictHandshakeMs(double rttMs, const ExpectationInput &x)
{
  return rttMs * expectedHandshakeRtts(x);
}

} // namespace doxbench
