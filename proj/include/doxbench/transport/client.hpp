// Copyright 2026 The doxbench Authors
// SPDX-License-Identifier: Apache-2.0

/// \file client.hpp
/// \brief Measurement clients for the five DNS transports.
///
/// Every client produces a QueryOutcome with the same phase split:
///
///  * handshake_ms covers everything needed before a query could be sent on
///    a fresh connection. For DoTCP that is the connect; for DoT and DoH it
///    runs from before connect to TLS completion; DoQ measures first flight
///    to handshake confirmation. DoUDP has no handshake and leaves the
///    field empty.
///  * resolve_ms runs from the first transmission that carries the query.
///    With accepted early data that is the first flight of the connection,
///    which is what makes 0-RTT visible in the numbers.
///
/// Byte counters are transport payloads (stream or datagram level), split
/// into handshake and application at handshake completion. Estimated IP
/// sizes can be derived later from the PDU counts; see ByteAccounting.
///
/// Errors never escape as exceptions: a failed attempt comes back as an
/// outcome whose error field is set and whose counters cover whatever
/// actually happened on the wire.

#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "doxbench/clock.hpp"
#include "doxbench/common.hpp"
#include "doxbench/dns/codec.hpp"
#include "doxbench/expectation.hpp"
#include "doxbench/measurement.hpp"
#include "doxbench/net/http2.hpp"
#include "doxbench/net/socket.hpp"
#include "doxbench/net/stream.hpp"
#include "doxbench/quicish/engine.hpp"
#include "doxbench/session.hpp"
#include "doxbench/tlsx/context.hpp"
#include "doxbench/tlsx/engine.hpp"
#include "doxbench/transport/emu_stream.hpp"
#include "doxbench/transport/types.hpp"

namespace doxbench::transport
{

namespace detail
{

using SteadyTime = std::chrono::steady_clock::time_point;

inline SteadyTime now()
{
  return std::chrono::steady_clock::now();
}

inline double msSince(SteadyTime from)
{
  return elapsedMs(from, now());
}

inline void fillBytes(QueryOutcome &o, const net::DirectionMeter &out, const net::DirectionMeter &in)
{
  o.bytes.hsC2rBytes = out.handshakeBytes;
  o.bytes.hsR2cBytes = in.handshakeBytes;
  o.bytes.queryBytes = out.applicationBytes;
  o.bytes.responseBytes = in.applicationBytes;
  o.bytes.hsC2rPdus = out.handshakePdus;
  o.bytes.hsR2cPdus = in.handshakePdus;
  o.bytes.queryPdus = out.applicationPdus;
  o.bytes.responsePdus = in.applicationPdus;
  o.bytes.mode = AccountingMode::TransportPayload;
}

/// Validates a response against the query it answers and records the rcode.
inline void adoptResponse(QueryOutcome &o, const Bytes &wire, const dns::DnsQuery &q)
{
  dns::DnsResponseSummary s;
  try
  {
    s = dns::decodeResponse(wire);
  }
  catch (const DxError &)
  {
    throw DxError(Errc::malformed_response, "undecodable response");
  }
  if (s.id != q.id)
  {
    throw DxError(Errc::malformed_response, "transaction id mismatch");
  }
  o.rcode = s.rcode;
}

struct OpenedLink
{
  std::unique_ptr<net::MeteredStream> stream;
  /// Borrowed view into stream's inner layer when the link is emulated,
  /// for the best-effort close drain. Null on kernel TCP.
  EmuByteStream *emu = nullptr;
  double connectMs = 0.0;
};

inline OpenedLink openLink(const Target &t, LinkKind link, std::uint32_t connectTimeoutMs)
{
  OpenedLink out;
  net::Endpoint dest{t.ip, t.port};
  SteadyTime started = now();
  if (link == LinkKind::KernelTcp)
  {
    net::TcpStream tcp = net::TcpStream::connect(dest, connectTimeoutMs);
    out.stream = std::make_unique<net::MeteredStream>(std::make_unique<net::TcpByteStream>(std::move(tcp)));
  }
  else
  {
    auto emu = EmuByteStream::connect(dest, net::Deadline::in(connectTimeoutMs));
    out.emu = emu.get();
    out.stream = std::make_unique<net::MeteredStream>(std::move(emu));
  }
  out.connectMs = msSince(started);
  return out;
}

inline void flushTls(tlsx::TlsEngine &tls, net::MeteredStream &link, const net::Deadline &dl)
{
  Bytes out = tls.takeOutbound();
  if (!out.empty())
  {
    link.send(out, dl);
  }
}

/// Runs the TLS handshake to completion over the stream. The final client
/// flight is sent before returning, so the caller's completion timestamp
/// is the moment application data could first go out.
inline void pumpTlsHandshake(tlsx::TlsEngine &tls, net::MeteredStream &link, const net::Deadline &dl)
{
  for (;;)
  {
    if (!tls.handshakeDone() && tls.drive() == tlsx::HsStatus::Failed)
    {
      throw DxError(tls.failureCode(), tls.lastError());
    }
    flushTls(tls, link, dl);
    if (tls.handshakeDone())
    {
      return;
    }
    Bytes in = link.recvSome(dl);
    if (in.empty())
    {
      throw DxError(Errc::tls_failure, "peer closed during handshake");
    }
    tls.feed(in);
  }
}

/// Reads TLS application data until one length-prefixed DNS message is
/// complete. acc keeps any excess bytes for the caller.
inline Bytes readTlsFramed(tlsx::TlsEngine &tls, net::MeteredStream &link, Bytes &acc, const net::Deadline &dl)
{
  for (;;)
  {
    Bytes app = tls.readApp();
    acc.insert(acc.end(), app.begin(), app.end());
    if (dns::hasCompleteFrame(acc))
    {
      auto [payload, rest] = dns::unframe(acc);
      acc = std::move(rest);
      return payload;
    }
    flushTls(tls, link, dl);
    Bytes in = link.recvSome(dl);
    if (in.empty())
    {
      throw DxError(Errc::incomplete_frame, "connection closed mid response");
    }
    tls.feed(in);
  }
}

struct TlsSetup
{
  tlsx::TlsContext ctx;
  tlsx::TlsEngine tls;
};

inline TlsSetup makeTlsClient(const Target &t, const ResolverKey &key, SessionStore &store,
                              const PresentableSession &view, std::vector<std::string> alpn, bool forceTls12)
{
  tlsx::ClientTlsOptions copt;
  copt.trustPem = t.trustPem;
  copt.verifyPeer = !t.insecure;
  copt.forceTls12 = forceTls12;
  copt.alpn = std::move(alpn);
  tlsx::TlsContext ctx = tlsx::TlsContext::client(copt);

  tlsx::TlsEngine::ClientOptions eopt;
  eopt.sniName = t.sni;
  eopt.verifyIp = t.sni.empty() ? t.ip : std::string();
  eopt.resume = view.ticket;
  eopt.ticketSink = [&store, key](tlsx::TicketData td) { store.storeTicket(key, std::move(td)); };
  tlsx::TlsEngine tls = tlsx::TlsEngine::client(ctx, std::move(eopt));
  return TlsSetup{std::move(ctx), std::move(tls)};
}

} // namespace detail

/// Plain DNS over UDP. Application-level retries follow the stub-resolver
/// pattern: the same datagram is resent at fixed intervals, each resend
/// counted into query bytes and the retransmission counter, and resolve_ms
/// keeps running from the first send.
inline QueryOutcome doudpQuery(const Target &t, const dns::DnsQuery &q, const Timeouts &to = {},
                               const RetransmitPolicy &retry = {})
{
  QueryOutcome o;
  o.protocol = ProtocolKind::DoUDP;
  detail::SteadyTime t0 = detail::now();
  try
  {
    net::UdpSocket sock = net::UdpSocket::open();
    net::Endpoint dest{t.ip, t.port};
    Bytes wire = dns::encodeQuery(q);

    std::uint64_t budget = std::min<std::uint64_t>(
        static_cast<std::uint64_t>(retry.initialTimeoutMs) * (retry.maxRetries + 1), to.totalMs);

    t0 = detail::now();
    sock.sendTo(wire, dest);
    o.bytes.queryBytes += wire.size();
    o.bytes.queryPdus += 1;
    std::uint32_t sent = 1;

    for (;;)
    {
      double elapsed = detail::msSince(t0);
      double nextResend = static_cast<double>(sent) * retry.initialTimeoutMs;
      double waitUntil = (sent <= retry.maxRetries) ? std::min<double>(nextResend, budget)
                                                    : static_cast<double>(budget);
      int wait = static_cast<int>(waitUntil - elapsed);
      if (wait > 0 && sock.waitReadable(std::min(wait, 50)))
      {
        while (auto dg = sock.tryRecv())
        {
          dns::DnsResponseSummary s;
          try
          {
            s = dns::decodeResponse(dg->payload);
          }
          catch (const DxError &)
          {
            throw DxError(Errc::malformed_response, "undecodable response");
          }
          if (s.id != q.id)
          {
            continue; // stray or stale datagram, keep waiting
          }
          o.timing.resolveMs = detail::msSince(t0);
          o.bytes.responseBytes += dg->payload.size();
          o.bytes.responsePdus += 1;
          o.rcode = s.rcode;
          o.totalMs = detail::msSince(t0);
          return o;
        }
        continue;
      }
      elapsed = detail::msSince(t0);
      if (sent <= retry.maxRetries && elapsed + 0.5 >= nextResend)
      {
        sock.sendTo(wire, dest);
        o.bytes.queryBytes += wire.size();
        o.bytes.queryPdus += 1;
        o.retransmissions += 1;
        sent += 1;
        continue;
      }
      if (elapsed >= static_cast<double>(budget))
      {
        throw DxError(Errc::timeout, "no response within budget");
      }
    }
  }
  catch (const DxError &e)
  {
    o.error = e.code();
  }
  o.totalMs = detail::msSince(t0);
  return o;
}

/// DNS over TCP: connect, then one length-prefixed query and response.
inline QueryOutcome dotcpQuery(const Target &t, const dns::DnsQuery &q, const Timeouts &to = {},
                               const StreamOptions &opts = {})
{
  QueryOutcome o;
  o.protocol = ProtocolKind::DoTCP;
  detail::SteadyTime t0 = detail::now();
  std::optional<detail::OpenedLink> link;
  try
  {
    link.emplace(detail::openLink(t, opts.link, to.connectMs));
    o.timing.handshakeMs = link->connectMs;
    link->stream->setPhase(net::MeterPhase::Application);

    Bytes framed = dns::frame(dns::encodeQuery(q));
    net::Deadline dl = net::Deadline::in(to.resolveMs);
    detail::SteadyTime queryStart = detail::now();
    link->stream->send(framed, dl);
    net::StreamReader reader(*link->stream);
    Bytes resp = reader.readFramed(dl);
    o.timing.resolveMs = elapsedMs(queryStart, detail::now());
    detail::adoptResponse(o, resp, q);
    o.totalMs = elapsedMs(t0, detail::now());
    o.retransmissions = static_cast<std::uint32_t>(link->stream->retransmissions());
    link->stream->shutdownSend();
    if (link->emu != nullptr)
    {
      link->emu->drain(net::Deadline::in(250));
    }
  }
  catch (const DxError &e)
  {
    o.error = e.code();
  }
  if (link && link->stream)
  {
    detail::fillBytes(o, link->stream->meter().out, link->stream->meter().in);
  }
  if (o.totalMs == 0.0)
  {
    o.totalMs = elapsedMs(t0, detail::now());
  }
  return o;
}

/// DNS over TLS. Presents a stored ticket when one is live, offers early
/// data when the ticket and options allow it, and harvests new tickets
/// into the session store as they arrive.
inline QueryOutcome dotQuery(const Target &t, const dns::DnsQuery &q, SessionStore &store,
                             const Timeouts &to = {}, const StreamOptions &opts = {})
{
  QueryOutcome o;
  o.protocol = ProtocolKind::DoT;
  ResolverKey key{t.ip, t.port, ProtocolKind::DoT};
  PresentableSession view = store.presentable(key);
  detail::SteadyTime t0 = detail::now();
  std::optional<detail::OpenedLink> link;
  try
  {
    link.emplace(detail::openLink(t, opts.link, to.connectMs));
    auto setup = detail::makeTlsClient(t, key, store, view, {}, opts.forceTls12);
    tlsx::TlsEngine &tls = setup.tls;

    Bytes framedQ = dns::frame(dns::encodeQuery(q));
    bool earlyOffered = view.ticket.has_value() && opts.attemptEarlyData &&
                        view.ticket->maxEarlyDataBytes >= framedQ.size() && !opts.forceTls12 &&
                        tls.tryWriteEarly(framedQ);

    detail::pumpTlsHandshake(tls, *link->stream, net::Deadline::in(to.handshakeMs));
    detail::SteadyTime hsDone = detail::now();
    o.timing.handshakeMs = elapsedMs(t0, hsDone);
    o.tlsVersion = tlsVersionName(tls.version());
    o.resumed = tls.resumed();
    o.zeroRttUsed = earlyOffered && tls.earlyDataAccepted();
    link->stream->setPhase(net::MeterPhase::Application);

    net::Deadline dl = net::Deadline::in(to.resolveMs);
    detail::SteadyTime queryStart = o.zeroRttUsed ? t0 : hsDone;
    if (!o.zeroRttUsed)
    {
      tls.writeApp(framedQ);
      detail::flushTls(tls, *link->stream, dl);
    }
    Bytes acc;
    Bytes resp = detail::readTlsFramed(tls, *link->stream, acc, dl);
    o.timing.resolveMs = elapsedMs(queryStart, detail::now());
    detail::adoptResponse(o, resp, q);
    o.totalMs = elapsedMs(t0, detail::now());
    o.retransmissions = static_cast<std::uint32_t>(link->stream->retransmissions());

    tls.sendCloseNotify();
    detail::flushTls(tls, *link->stream, net::Deadline::in(250));
    link->stream->shutdownSend();
    if (link->emu != nullptr)
    {
      link->emu->drain(net::Deadline::in(250));
    }
  }
  catch (const DxError &e)
  {
    o.error = e.code();
  }
  if (link && link->stream)
  {
    detail::fillBytes(o, link->stream->meter().out, link->stream->meter().in);
  }
  if (o.totalMs == 0.0)
  {
    o.totalMs = elapsedMs(t0, detail::now());
  }
  return o;
}

/// DNS over HTTPS: HTTP/2 over TLS, one request per query. POST carries
/// the message as the body; GET encodes it into the dns= query parameter.
inline QueryOutcome dohQuery(const Target &t, const dns::DnsQuery &q, SessionStore &store,
                             const Timeouts &to = {}, const StreamOptions &opts = {})
{
  QueryOutcome o;
  o.protocol = ProtocolKind::DoH;
  ResolverKey key{t.ip, t.port, ProtocolKind::DoH};
  PresentableSession view = store.presentable(key);
  detail::SteadyTime t0 = detail::now();
  std::optional<detail::OpenedLink> link;
  try
  {
    link.emplace(detail::openLink(t, opts.link, to.connectMs));
    auto setup = detail::makeTlsClient(t, key, store, view, {"h2"}, opts.forceTls12);
    tlsx::TlsEngine &tls = setup.tls;

    Bytes wire = dns::encodeQuery(q);
    std::string authority = t.sni.empty() ? t.ip : t.sni;
    static constexpr const char *kContentType = "application/dns-message";
    net::h2::H2Client h2;
    std::uint32_t streamId = 0;
    if (opts.dohMethod == DohMethod::Post)
    {
      streamId = h2.sendPost(t.dohPath, authority, kContentType, wire);
    }
    else
    {
      streamId = h2.sendGet(t.dohPath + "?dns=" + base64UrlEncode(wire), authority, kContentType);
    }
    Bytes request = h2.takeOutbound();

    bool earlyOffered = view.ticket.has_value() && opts.attemptEarlyData &&
                        view.ticket->maxEarlyDataBytes >= request.size() && !opts.forceTls12 &&
                        tls.tryWriteEarly(request);

    detail::pumpTlsHandshake(tls, *link->stream, net::Deadline::in(to.handshakeMs));
    detail::SteadyTime hsDone = detail::now();
    o.timing.handshakeMs = elapsedMs(t0, hsDone);
    o.tlsVersion = tlsVersionName(tls.version());
    o.resumed = tls.resumed();
    o.zeroRttUsed = earlyOffered && tls.earlyDataAccepted();
    if (tls.alpn() != "h2")
    {
      throw DxError(Errc::alpn_mismatch, "server selected '" + tls.alpn() + "'");
    }
    link->stream->setPhase(net::MeterPhase::Application);

    net::Deadline dl = net::Deadline::in(to.resolveMs);
    detail::SteadyTime queryStart = o.zeroRttUsed ? t0 : hsDone;
    if (!o.zeroRttUsed)
    {
      tls.writeApp(request);
      detail::flushTls(tls, *link->stream, dl);
    }

    std::optional<net::h2::Response> resp;
    for (;;)
    {
      Bytes app = tls.readApp();
      if (!app.empty())
      {
        h2.feed(app);
      }
      Bytes h2out = h2.takeOutbound();
      if (!h2out.empty())
      {
        tls.writeApp(h2out);
      }
      detail::flushTls(tls, *link->stream, dl);
      resp = h2.takeResponse(streamId);
      if (resp)
      {
        break;
      }
      Bytes in = link->stream->recvSome(dl);
      if (in.empty())
      {
        throw DxError(Errc::incomplete_frame, "connection closed mid response");
      }
      tls.feed(in);
    }
    o.timing.resolveMs = elapsedMs(queryStart, detail::now());
    if (resp->status < 200 || resp->status >= 300)
    {
      throw DxError(Errc::http_status_error, "HTTP status " + std::to_string(resp->status));
    }
    detail::adoptResponse(o, resp->body, q);
    o.totalMs = elapsedMs(t0, detail::now());
    o.retransmissions = static_cast<std::uint32_t>(link->stream->retransmissions());

    tls.sendCloseNotify();
    detail::flushTls(tls, *link->stream, net::Deadline::in(250));
    link->stream->shutdownSend();
    if (link->emu != nullptr)
    {
      link->emu->drain(net::Deadline::in(250));
    }
  }
  catch (const DxError &e)
  {
    o.error = e.code();
  }
  if (link && link->stream)
  {
    detail::fillBytes(o, link->stream->meter().out, link->stream->meter().in);
  }
  if (o.totalMs == 0.0)
  {
    o.totalMs = elapsedMs(t0, detail::now());
  }
  return o;
}

namespace detail
{

inline QueryOutcome doqAttempt(const Target &t, const dns::DnsQuery &q, SessionStore &store,
                               const ResolverKey &key, const Timeouts &to, const StreamOptions &opts,
                               std::uint32_t version, const PresentableSession &view)
{
  QueryOutcome o;
  o.protocol = ProtocolKind::DoQ;

  // Message id zero on the wire; responses are matched per stream.
  dns::DnsQuery wireQ = q;
  wireQ.id = 0;
  Bytes framedQ = dns::frame(dns::encodeQuery(wireQ));

  std::vector<std::string> alpn = view.doqAlpn ? std::vector<std::string>{*view.doqAlpn} : doqAlpnPreference();

  tlsx::ClientTlsOptions copt;
  copt.trustPem = t.trustPem;
  copt.verifyPeer = !t.insecure;
  copt.alpn = std::move(alpn);

  quicish::ClientEngine::Options eo{tlsx::TlsContext::client(copt), {}, {}, quicish::kVersion, {}, 0};
  eo.tls.sniName = t.sni;
  eo.tls.verifyIp = t.sni.empty() ? t.ip : std::string();
  eo.tls.resume = view.ticket;
  eo.tls.ticketSink = [&store, key](tlsx::TicketData td) { store.storeTicket(key, std::move(td)); };
  if (view.token)
  {
    eo.token = *view.token;
  }
  eo.version = version;
  if (view.ticket && opts.attemptEarlyData && view.ticket->maxEarlyDataBytes >= framedQ.size())
  {
    eo.earlyData = framedQ;
  }
  eo.seed = std::random_device{}();

  net::UdpSocket sock = net::UdpSocket::open();
  net::Endpoint dest{t.ip, t.port};
  SteadyTime t0 = now();
  auto engineNow = [&t0] { return static_cast<std::uint64_t>(msSince(t0)); };

  quicish::ClientEngine eng(std::move(eo), 0);
  bool offeredEarly = eng.earlyDataOffered();

  auto flush = [&] {
    for (const Bytes &d : eng.takeDatagrams(engineNow()))
    {
      sock.sendTo(d, dest);
    }
  };
  auto pump = [&](const net::Deadline &dl) {
    std::uint64_t nowMs = engineNow();
    if (auto ta = eng.nextTimerAt(); ta && *ta <= nowMs)
    {
      eng.onTimer(nowMs);
      flush();
    }
    int wait = dl.remainingMs();
    if (auto ta = eng.nextTimerAt())
    {
      std::uint64_t delta = *ta > nowMs ? *ta - nowMs : 0;
      wait = std::min<int>(wait, static_cast<int>(delta));
    }
    wait = std::max(0, std::min(wait, 50));
    if (sock.waitReadable(wait))
    {
      while (auto dg = sock.tryRecv())
      {
        eng.onDatagram(dg->payload, engineNow());
      }
      flush();
    }
  };

  flush();

  net::Deadline hsDl = net::Deadline::in(to.handshakeMs);
  while (!eng.handshakeDone() && !eng.failed())
  {
    if (hsDl.expired())
    {
      o.error = Errc::timeout;
      fillBytes(o, eng.meter().out, eng.meter().in);
      o.totalMs = msSince(t0);
      return o;
    }
    pump(hsDl);
  }
  if (eng.failed())
  {
    o.error = eng.errorCode();
    if (o.error == Errc::version_negotiation_required && !eng.offeredVersions().empty())
    {
      const auto &offered = eng.offeredVersions();
      std::uint32_t pick = offered.front();
      for (std::uint32_t v : offered)
      {
        if (v == quicish::kVersion)
        {
          pick = v;
          break;
        }
      }
      store.storeQuicVersion(key, pick);
      o.quicVersion = pick;
    }
    fillBytes(o, eng.meter().out, eng.meter().in);
    o.totalMs = msSince(t0);
    return o;
  }

  SteadyTime hsDone = now();
  o.timing.handshakeMs = elapsedMs(t0, hsDone);
  o.tlsVersion = tlsVersionName(TlsVersion::v1_3);
  o.quicVersion = version;
  o.doqAlpn = eng.alpn();
  o.resumed = eng.resumed();
  o.zeroRttUsed = offeredEarly && eng.earlyDataAccepted();

  try
  {
    net::Deadline dl = net::Deadline::in(to.resolveMs);
    SteadyTime queryStart = o.zeroRttUsed ? t0 : hsDone;
    if (!o.zeroRttUsed)
    {
      eng.writeApp(framedQ, engineNow());
      flush();
    }
    Bytes acc;
    for (;;)
    {
      Bytes app = eng.readApp();
      acc.insert(acc.end(), app.begin(), app.end());
      if (dns::hasCompleteFrame(acc))
      {
        break;
      }
      if (eng.failed())
      {
        throw DxError(eng.errorCode(), eng.errorText());
      }
      if (dl.expired())
      {
        throw DxError(Errc::timeout, "no response within budget");
      }
      pump(dl);
    }
    o.timing.resolveMs = elapsedMs(queryStart, now());
    auto [payload, rest] = dns::unframe(acc);
    adoptResponse(o, payload, wireQ);
    o.totalMs = msSince(t0);

    store.storeQuicVersion(key, version);
    store.storeDoqAlpn(key, eng.alpn());
    if (auto tok = eng.receivedToken())
    {
      store.storeToken(key, *tok);
    }
    eng.close(engineNow());
    flush();
  }
  catch (const DxError &e)
  {
    o.error = e.code();
  }
  o.retransmissions = static_cast<std::uint32_t>(eng.retransmissions());
  fillBytes(o, eng.meter().out, eng.meter().in);
  if (o.totalMs == 0.0)
  {
    o.totalMs = msSince(t0);
  }
  return o;
}

} // namespace detail

/// DNS over QUIC-style transport. Runs at the stored negotiated version
/// when one is known; on a version negotiation response it records the
/// server's choice and retries once.
inline QueryOutcome doqQuery(const Target &t, const dns::DnsQuery &q, SessionStore &store,
                             const Timeouts &to = {}, const StreamOptions &opts = {})
{
  ResolverKey key{t.ip, t.port, ProtocolKind::DoQ};
  PresentableSession view = store.presentable(key);
  std::uint32_t version = view.quicVersion.value_or(quicish::kVersion);
  QueryOutcome o = detail::doqAttempt(t, q, store, key, to, opts, version, view);
  if (o.error == Errc::version_negotiation_required)
  {
    PresentableSession after = store.presentable(key);
    if (after.quicVersion && *after.quicVersion != version)
    {
      o = detail::doqAttempt(t, q, store, key, to, opts, *after.quicVersion, after);
      o.note = "version-negotiated";
    }
  }
  return o;
}

/// Runs one query over the given protocol. Session state (tickets, address
/// validation tokens, negotiated versions) lives in the store, keyed by
/// resolver endpoint and protocol.
inline QueryOutcome query(ProtocolKind protocol, const Target &t, const dns::DnsQuery &q,
                          SessionStore &store, const Timeouts &to = {}, const StreamOptions &opts = {},
                          const RetransmitPolicy &retry = {})
{
  switch (protocol)
  {
    case ProtocolKind::DoUDP:
      return doudpQuery(t, q, to, retry);
    case ProtocolKind::DoTCP:
      return dotcpQuery(t, q, to, opts);
    case ProtocolKind::DoT:
      return dotQuery(t, q, store, to, opts);
    case ProtocolKind::DoH:
      return dohQuery(t, q, store, to, opts);
    case ProtocolKind::DoQ:
      return doqQuery(t, q, store, to, opts);
  }
  QueryOutcome o;
  o.error = Errc::config_invalid;
  return o;
}

struct WarmMeasure
{
  QueryOutcome warm;
  QueryOutcome actual;
};

/// Cold-then-warm pair on a clean slate: forget any session state, run a
/// warm-up query to harvest tickets, then the measured query. When the
/// warm-up fails the measurement is not attempted and reports warm_failed.
inline WarmMeasure warmThenMeasure(ProtocolKind protocol, const Target &t, const dns::DnsQuery &q,
                                   SessionStore &store, const Timeouts &to = {},
                                   const StreamOptions &opts = {})
{
  ResolverKey key{t.ip, t.port, protocol};
  store.forget(key);
  WarmMeasure wm;
  wm.warm = query(protocol, t, q, store, to, opts);
  if (!wm.warm.ok())
  {
    wm.actual.protocol = protocol;
    wm.actual.error = Errc::warm_failed;
    return wm;
  }
  bool sessionProtocol = protocol == ProtocolKind::DoT || protocol == ProtocolKind::DoH ||
                         protocol == ProtocolKind::DoQ;
  bool harvested = store.hasLiveTicket(key);
  wm.actual = query(protocol, t, q, store, to, opts);
  if (sessionProtocol && !harvested && !wm.actual.error.has_value())
  {
    wm.actual.note = "resumption-unavailable";
  }
  return wm;
}

} // namespace doxbench::transport
