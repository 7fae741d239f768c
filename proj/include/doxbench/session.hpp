// Copyright 2026 The doxbench Authors
// SPDX-License-Identifier: Apache-2.0

/// \file session.hpp
/// \brief Shared per-resolver cache of resumption state: TLS session tickets,
/// QUIC address-validation tokens, the negotiated QUIC version and the DoQ
/// ALPN. Clients harvest state here during warm runs and present it on the
/// measurement run.
///
/// Two rules are enforced centrally rather than by each caller:
///   * a ticket is presented only while wall-now < issue-time + lifetime,
///     with the lifetime clamped to the 7-day protocol maximum;
///   * an address-validation token is presented only together with a ticket.

#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>

#include "doxbench/clock.hpp"
#include "doxbench/common.hpp"
#include "doxbench/measurement.hpp"
#include "doxbench/tlsx/context.hpp"

namespace doxbench
{

/// One resolver endpoint as seen by one protocol client.
struct ResolverKey
{
  std::string ip;
  std::uint16_t port = 0;
  ProtocolKind protocol = ProtocolKind::DoUDP;

  friend bool operator<(const ResolverKey &a, const ResolverKey &b)
  {
    return std::tie(a.ip, a.port, a.protocol) < std::tie(b.ip, b.port, b.protocol);
  }

  friend bool operator==(const ResolverKey &a, const ResolverKey &b)
  {
    return std::tie(a.ip, a.port, a.protocol) == std::tie(b.ip, b.port, b.protocol);
  }
};

/// The subset of cached state that may be sent on the wire right now.
/// `token` is populated only when `ticket` is as well.
struct PresentableSession
{
  std::optional<tlsx::TicketData> ticket;
  std::optional<Bytes> token;
  std::optional<std::uint32_t> quicVersion;
  std::optional<std::string> doqAlpn;

  bool resumable() const { return ticket.has_value(); }
};

/// \brief Thread-safe map from resolver endpoint to resumption state.
class SessionStore
{
public:
  explicit SessionStore(const Clock &clock = SystemClock::instance()) : clock_(&clock) {}

  void storeTicket(const ResolverKey &key, tlsx::TicketData ticket)
  {
    std::lock_guard<std::mutex> lock(mu_);
    Entry &e = map_[key];
    e.ticket = std::move(ticket);
    e.ticketIssuedWall = clock_->wallSeconds();
  }

  void storeToken(const ResolverKey &key, Bytes token)
  {
    std::lock_guard<std::mutex> lock(mu_);
    map_[key].token = std::move(token);
  }

  void storeQuicVersion(const ResolverKey &key, std::uint32_t version)
  {
    std::lock_guard<std::mutex> lock(mu_);
    map_[key].quicVersion = version;
  }

  void storeDoqAlpn(const ResolverKey &key, std::string alpn)
  {
    std::lock_guard<std::mutex> lock(mu_);
    map_[key].doqAlpn = std::move(alpn);
  }

  /// Snapshot of what may be presented now. Expired tickets are pruned as a
  /// side effect, together with any token they were guarding.
  PresentableSession presentable(const ResolverKey &key)
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = map_.find(key);
    if (it == map_.end())
    {
      return {};
    }
    Entry &e = it->second;
    if (e.ticket && !ticketLive(e))
    {
      e.ticket.reset();
      e.token.reset();
    }
    PresentableSession out;
    out.ticket = e.ticket;
    if (e.ticket)
    {
      out.token = e.token;
    }
    out.quicVersion = e.quicVersion;
    out.doqAlpn = e.doqAlpn;
    return out;
  }

  bool hasLiveTicket(const ResolverKey &key)
  {
    return presentable(key).ticket.has_value();
  }

  void forget(const ResolverKey &key)
  {
    std::lock_guard<std::mutex> lock(mu_);
    map_.erase(key);
  }

  void clear()
  {
    std::lock_guard<std::mutex> lock(mu_);
    map_.clear();
  }

  std::size_t size() const
  {
    std::lock_guard<std::mutex> lock(mu_);
    return map_.size();
  }

private:
  struct Entry
  {
    std::optional<tlsx::TicketData> ticket;
    std::int64_t ticketIssuedWall = 0;
    std::optional<Bytes> token;
    std::optional<std::uint32_t> quicVersion;
    std::optional<std::string> doqAlpn;
  };

  bool ticketLive(const Entry &e) const
  {
    std::int64_t lifetime = std::min<std::int64_t>(e.ticket->lifetimeSeconds,
                                                   tlsx::kMaxTicketLifetimeSeconds);
    return clock_->wallSeconds() < e.ticketIssuedWall + lifetime;
  }

  mutable std::mutex mu_;
  const Clock *clock_;
  std::map<ResolverKey, Entry> map_;
};

} // namespace doxbench
