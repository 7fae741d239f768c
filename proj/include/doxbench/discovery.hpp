// Copyright 2026 The doxbench Authors
// SPDX-License-Identifier: Apache-2.0

/// \file discovery.hpp
/// \brief Stateless DoQ capability probing and resolver verification.
///
/// The probe works like an Internet-scale scanner module: one padded
/// long-header INITIAL with the invalid version 0 per target, and a
/// Version Negotiation response identifies QUIC support without either
/// side keeping state. Verification then attempts real handshakes and
/// queries per protocol. Every outbound step is gated on the blocklist
/// and paced by a token bucket.

#pragma once

#include <arpa/inet.h>

#include <chrono>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include "doxbench/clock.hpp"
#include "doxbench/common.hpp"
#include "doxbench/dns/codec.hpp"
#include "doxbench/measurement.hpp"
#include "doxbench/net/socket.hpp"
#include "doxbench/quicish/engine.hpp"
#include "doxbench/quicish/wire.hpp"
#include "doxbench/session.hpp"
#include "doxbench/transport/client.hpp"

namespace doxbench::discovery
{

// ---- blocklist ----------------------------------------------------------

/// IPv4 allow/deny list: one address or CIDR per line, '#' starts a
/// comment. Longest-prefix semantics are unnecessary; any matching rule
/// blocks the address.
class Blocklist
{
public:
  Blocklist() = default;

  static Blocklist fromText(const std::string &text)
  {
    Blocklist b;
    std::istringstream in(text);
    std::string line;
    std::size_t lineNo = 0;
    while (std::getline(in, line))
    {
      lineNo += 1;
      if (auto hash = line.find('#'); hash != std::string::npos)
      {
        line.resize(hash);
      }
      std::size_t first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos)
      {
        continue;
      }
      std::size_t last = line.find_last_not_of(" \t\r");
      std::string entry = line.substr(first, last - first + 1);

      std::string addr = entry;
      std::uint32_t bits = 32;
      if (auto slash = entry.find('/'); slash != std::string::npos)
      {
        addr = entry.substr(0, slash);
        std::string suffix = entry.substr(slash + 1);
        if (suffix.empty() || suffix.size() > 2 ||
            suffix.find_first_not_of("0123456789") != std::string::npos)
        {
          throw DxError(Errc::config_invalid, "blocklist line " + std::to_string(lineNo) +
                                                  ": bad prefix length '" + suffix + "'");
        }
        bits = static_cast<std::uint32_t>(std::stoul(suffix));
        if (bits > 32)
        {
          throw DxError(Errc::config_invalid, "blocklist line " + std::to_string(lineNo) +
                                                  ": prefix length exceeds 32");
        }
      }
      auto parsed = parseV4(addr);
      if (!parsed)
      {
        throw DxError(Errc::config_invalid, "blocklist line " + std::to_string(lineNo) +
                                                ": not an IPv4 address '" + addr + "'");
      }
      b.rules_.push_back({*parsed & maskFor(bits), bits});
    }
    return b;
  }

  static Blocklist fromFile(const std::string &path)
  {
    std::ifstream f(path);
    if (!f)
    {
      throw DxError(Errc::config_invalid, "cannot read blocklist " + path);
    }
    std::ostringstream buf;
    buf << f.rdbuf();
    return fromText(buf.str());
  }

  bool contains(const std::string &ip) const
  {
    auto parsed = parseV4(ip);
    if (!parsed)
    {
      return false; // non-IPv4 targets are outside this list's scope
    }
    for (const Rule &r : rules_)
    {
      if ((*parsed & maskFor(r.bits)) == r.network)
      {
        return true;
      }
    }
    return false;
  }

  std::size_t size() const
  {
    return rules_.size();
  }

private:
  struct Rule
  {
    std::uint32_t network = 0;
    std::uint32_t bits = 32;
  };

  static std::optional<std::uint32_t> parseV4(const std::string &addr)
  {
    in_addr a{};
    if (inet_pton(AF_INET, addr.c_str(), &a) != 1)
    {
      return std::nullopt;
    }
    return ntohl(a.s_addr);
  }

  static std::uint32_t maskFor(std::uint32_t bits)
  {
    return bits == 0 ? 0 : (~std::uint32_t{0} << (32 - bits));
  }

  std::vector<Rule> rules_;
};

// ---- pacing -------------------------------------------------------------

/// Token bucket over an injectable clock. tryAcquire never blocks;
/// acquire sleeps until a token accrues (wall-clock backed clocks only).
class TokenBucket
{
public:
  explicit TokenBucket(double ratePerSecond, double burst = 1.0,
                       const Clock &clock = SystemClock::instance())
      : rate_(ratePerSecond), burst_(burst), clock_(clock), tokens_(burst),
        last_(clock.steadyNow())
  {
    if (ratePerSecond <= 0.0 || burst <= 0.0)
    {
      throw DxError(Errc::config_invalid, "token bucket rate and burst must be positive");
    }
  }

  bool tryAcquire()
  {
    refill();
    if (tokens_ >= 1.0)
    {
      tokens_ -= 1.0;
      return true;
    }
    return false;
  }

  void acquire()
  {
    while (!tryAcquire())
    {
      double deficit = 1.0 - tokens_;
      auto wait = std::chrono::duration<double>(deficit / rate_);
      std::this_thread::sleep_for(
          std::chrono::duration_cast<std::chrono::microseconds>(wait));
    }
  }

private:
  void refill()
  {
    auto now = clock_.steadyNow();
    double dt = elapsedMs(last_, now) / 1000.0;
    last_ = now;
    tokens_ = std::min(burst_, tokens_ + dt * rate_);
  }

  double rate_;
  double burst_;
  const Clock &clock_;
  double tokens_;
  SteadyTime last_;
};

// ---- version negotiation probe ------------------------------------------

namespace detail
{

inline Bytes randomCid(std::mt19937_64 &rng)
{
  Bytes cid(quicish::kCidLen);
  for (auto &b : cid)
  {
    b = static_cast<std::uint8_t>(rng());
  }
  return cid;
}

} // namespace detail

/// The scanner datagram: INITIAL-shaped long header carrying version 0
/// and nothing but padding, sized up to the minimum INITIAL datagram.
inline Bytes buildProbeDatagram(const Bytes &dcid, const Bytes &scid)
{
  quicish::Packet p;
  p.type = quicish::PacketType::Initial;
  p.version = 0;
  p.dcid = dcid;
  p.scid = scid;
  p.frames.push_back(quicish::PaddingFrame{1});
  std::size_t base = quicish::encodePacket(p).size();
  if (base < quicish::kMinInitialDatagram)
  {
    p.frames.clear();
    p.frames.push_back(quicish::PaddingFrame{quicish::kMinInitialDatagram - base + 1});
  }
  return quicish::encodePacket(p);
}

struct ProbeReply
{
  bool negotiated = false;
  std::vector<std::uint32_t> versions;
  std::optional<Errc> error; ///< set when not negotiated
};

/// One probe, one datagram. True only for a Version Negotiation response
/// that echoes both of the probe's connection ids.
inline ProbeReply probeVersionNegotiationDetail(const std::string &ip, std::uint16_t port,
                                                std::uint32_t timeoutMs)
{
  ProbeReply reply;
  try
  {
    net::UdpSocket sock = net::UdpSocket::open();
    net::Endpoint dest{ip, port};
    std::mt19937_64 rng(std::random_device{}());
    Bytes dcid = detail::randomCid(rng);
    Bytes scid = detail::randomCid(rng);
    sock.sendTo(buildProbeDatagram(dcid, scid), dest);

    net::Deadline dl = net::Deadline::in(timeoutMs);
    while (!dl.expired())
    {
      if (!sock.waitReadable(std::min(50, std::max(1, dl.remainingMs()))))
      {
        continue;
      }
      while (auto dg = sock.tryRecv())
      {
        for (const auto &item : quicish::decodeDatagram(dg->payload))
        {
          const auto *vn = std::get_if<quicish::VersionNegotiation>(&item);
          if (vn != nullptr && vn->dcid == scid && vn->scid == dcid)
          {
            reply.negotiated = true;
            reply.versions = vn->versions;
            return reply;
          }
        }
      }
    }
    reply.error = Errc::timeout;
  }
  catch (const DxError &e)
  {
    reply.error = e.code();
  }
  return reply;
}

inline bool probeVersionNegotiation(const std::string &ip, std::uint16_t port,
                                    std::uint32_t timeoutMs)
{
  return probeVersionNegotiationDetail(ip, port, timeoutMs).negotiated;
}

/// Probes the well-known DoQ port set and returns every responding port,
/// in scan order. Verification decides which one to adopt.
inline std::vector<std::uint16_t> probeDoqPorts(const std::string &ip, std::uint32_t timeoutMs)
{
  std::vector<std::uint16_t> responding;
  for (std::uint16_t port : kDoqScanPorts)
  {
    if (probeVersionNegotiation(ip, port, timeoutMs))
    {
      responding.push_back(port);
    }
  }
  return responding;
}

// ---- handshake verification ---------------------------------------------

struct VerifyOptions
{
  std::string sni;
  std::string trustPem;
  bool insecure = false;
  std::uint32_t timeoutMs = 3000;
};

struct DoqVerification
{
  bool ok = false;
  std::string alpn;
  std::optional<std::uint32_t> quicVersion;
  std::optional<Errc> error;
};

namespace detail
{

inline DoqVerification verifyDoqOnce(const std::string &ip, std::uint16_t port,
                                     const std::vector<std::string> &alpnList,
                                     const VerifyOptions &opts, std::uint32_t version,
                                     std::vector<std::uint32_t> *offered)
{
  DoqVerification out;
  try
  {
    tlsx::ClientTlsOptions copt;
    copt.trustPem = opts.trustPem;
    copt.verifyPeer = !opts.insecure;
    copt.alpn = alpnList;

    quicish::ClientEngine::Options eo{tlsx::TlsContext::client(copt), {}, {}, version, {}, 0};
    eo.tls.sniName = opts.sni;
    eo.tls.verifyIp = opts.sni.empty() ? ip : std::string();
    eo.seed = std::random_device{}();

    net::UdpSocket sock = net::UdpSocket::open();
    net::Endpoint dest{ip, port};
    auto epoch = std::chrono::steady_clock::now();
    auto engineNow = [&epoch] {
      return static_cast<std::uint64_t>(elapsedMs(epoch, std::chrono::steady_clock::now()));
    };
    quicish::ClientEngine eng(std::move(eo), 0);
    auto flush = [&] {
      for (const Bytes &d : eng.takeDatagrams(engineNow()))
      {
        sock.sendTo(d, dest);
      }
    };
    flush();

    net::Deadline dl = net::Deadline::in(opts.timeoutMs);
    while (!eng.handshakeDone() && !eng.failed())
    {
      if (dl.expired())
      {
        out.error = Errc::timeout;
        return out;
      }
      std::uint64_t nowMs = engineNow();
      if (auto ta = eng.nextTimerAt(); ta && *ta <= nowMs)
      {
        eng.onTimer(nowMs);
        flush();
      }
      int wait = std::max(0, std::min({dl.remainingMs(), 50}));
      if (sock.waitReadable(wait))
      {
        while (auto dg = sock.tryRecv())
        {
          eng.onDatagram(dg->payload, engineNow());
        }
        flush();
      }
    }
    if (eng.failed())
    {
      out.error = eng.errorCode();
      if (offered != nullptr)
      {
        *offered = eng.offeredVersions();
      }
      return out;
    }
    out.ok = true;
    out.alpn = eng.alpn();
    out.quicVersion = version;
    eng.close(engineNow());
    flush();
  }
  catch (const DxError &e)
  {
    out.error = e.code();
  }
  return out;
}

} // namespace detail

/// Full handshake with the offered ALPN list; follows one version
/// negotiation round like the measurement client does.
inline DoqVerification verifyDoq(const std::string &ip, std::uint16_t port,
                                 const std::vector<std::string> &alpnList,
                                 const VerifyOptions &opts = {})
{
  std::vector<std::uint32_t> offered;
  DoqVerification out =
      detail::verifyDoqOnce(ip, port, alpnList, opts, quicish::kVersion, &offered);
  if (!out.ok && out.error == Errc::version_negotiation_required && !offered.empty())
  {
    std::uint32_t pick = offered.front();
    for (std::uint32_t v : offered)
    {
      if (v == quicish::kVersion)
      {
        pick = v;
        break;
      }
    }
    out = detail::verifyDoqOnce(ip, port, alpnList, opts, pick, nullptr);
  }
  return out;
}

// ---- full resolver verification -----------------------------------------

struct CandidateResolver
{
  std::string ip;
  std::map<ProtocolKind, std::uint16_t> ports;
  std::string sni;
  std::string trustPem;
  bool insecure = false;
  std::string dohPath = "/dns-query";
};

struct ResolverTarget
{
  std::string ip;
  std::map<ProtocolKind, std::uint16_t> ports;
  std::set<ProtocolKind> support;
  std::optional<std::string> doqAlpn;
  std::optional<std::uint32_t> quicVersion;
  std::string verifiedAt;

  /// All five protocols verified on this resolver.
  bool fullIntersection() const
  {
    return support.size() == kAllProtocols.size();
  }
};

/// One test query per configured protocol; a valid DNS response of any
/// rcode sets the support bit. Per-protocol failures are recorded by
/// omission and never abort the remaining protocols.
inline ResolverTarget verifyDox(const CandidateResolver &cand, const std::string &qname,
                                const transport::Timeouts &to = {},
                                const Clock &clock = SystemClock::instance())
{
  ResolverTarget out;
  out.ip = cand.ip;
  out.ports = cand.ports;
  SessionStore store;
  for (const auto &[proto, port] : cand.ports)
  {
    transport::Target t;
    t.ip = cand.ip;
    t.port = port;
    t.sni = cand.sni;
    t.trustPem = cand.trustPem;
    t.insecure = cand.insecure;
    t.dohPath = cand.dohPath;
    dns::DnsQuery q;
    q.id = static_cast<std::uint16_t>(std::random_device{}());
    q.qname = qname;
    QueryOutcome o = transport::query(proto, t, q, store, to);
    if (o.ok())
    {
      out.support.insert(proto);
      if (proto == ProtocolKind::DoQ)
      {
        out.doqAlpn = o.doqAlpn;
        out.quicVersion = o.quicVersion;
      }
    }
  }
  out.verifiedAt = utcTimestamp(clock.wallSeconds());
  return out;
}

// ---- rate-limited sweep --------------------------------------------------

struct SweepOptions
{
  double probesPerSecond = 1000.0;
  double burst = 1.0;
  std::uint32_t timeoutMs = 1000;
  const Blocklist *blocklist = nullptr;
};

struct ProbeRecord
{
  std::string ip;
  std::uint16_t port = 0;
  bool negotiated = false;
  bool blocklisted = false;
  std::optional<Errc> error;
};

/// Probes each (ip, port) at the configured rate. Blocklisted addresses
/// are recorded but never contacted.
inline std::vector<ProbeRecord> probeSweep(
    const std::vector<std::pair<std::string, std::uint16_t>> &targets, const SweepOptions &opts = {})
{
  std::vector<ProbeRecord> out;
  out.reserve(targets.size());
  TokenBucket bucket(opts.probesPerSecond, opts.burst);
  for (const auto &[ip, port] : targets)
  {
    ProbeRecord rec;
    rec.ip = ip;
    rec.port = port;
    if (opts.blocklist != nullptr && opts.blocklist->contains(ip))
    {
      rec.blocklisted = true;
      rec.error = Errc::blocklisted;
      out.push_back(std::move(rec));
      continue;
    }
    bucket.acquire();
    ProbeReply reply = probeVersionNegotiationDetail(ip, port, opts.timeoutMs);
    rec.negotiated = reply.negotiated;
    rec.error = reply.error;
    out.push_back(std::move(rec));
  }
  return out;
}

} // namespace doxbench::discovery
