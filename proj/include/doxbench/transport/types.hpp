// Copyright 2026 The doxbench Authors
// SPDX-License-Identifier: Apache-2.0

/// \file types.hpp
/// \brief Shared knobs for the per-protocol measurement clients.

#pragma once

#include <cstdint>
#include <string>

namespace doxbench::transport
{

/// One resolver endpoint plus the TLS trust configuration to reach it.
struct Target
{
  std::string ip;
  std::uint16_t port = 0;
  /// SNI and certificate host name; when empty the certificate is checked
  /// against the IP instead.
  std::string sni;
  std::string dohPath = "/dns-query";
  /// PEM trust anchor; empty means the system default store.
  std::string trustPem;
  /// Skip certificate verification (scanning unknown public resolvers).
  bool insecure = false;
};

struct Timeouts
{
  std::uint32_t connectMs = 5000;
  std::uint32_t handshakeMs = 5000;
  std::uint32_t resolveMs = 5000;
  std::uint32_t totalMs = 15000;
};

/// DoUDP application-level retry behaviour. The measurement default is no
/// retry at all so a loss shows up as a timeout instead of skewing
/// resolve_ms; page-load simulation uses the 5-second stub-resolver retry.
struct RetransmitPolicy
{
  std::uint32_t initialTimeoutMs = 5000;
  std::uint32_t maxRetries = 0;
};

/// Which link the stream protocols run over. KernelTcp is the real socket
/// path; EmuLink is the user-space reliable link whose connect handshake
/// traverses the mock's delay queue (kernel SYNs cannot be delayed from
/// user space, so loopback timing tests need this).
enum class LinkKind
{
  KernelTcp,
  EmuLink,
};

enum class DohMethod
{
  Post,
  Get,
};

struct StreamOptions
{
  LinkKind link = LinkKind::KernelTcp;
  /// Offer TLS 1.3 early data when a harvested ticket permits it.
  bool attemptEarlyData = true;
  DohMethod dohMethod = DohMethod::Post;
  bool forceTls12 = false;
};

} // namespace doxbench::transport
