// Copyright 2026 The doxbench Authors
// SPDX-License-Identifier: Apache-2.0

/// \file mock_resolver.hpp
/// \brief Hermetic resolver speaking all five protocols with controllable
/// one-way delay, ticket policy, 0-RTT acceptance, and certificate-flight
/// size. Every integration test measures against this.
///
/// Delay is injected at the server's I/O boundary: each inbound datagram or
/// stream chunk is processed one delay unit after it arrives, and each
/// outbound write leaves one delay unit after it is produced. A client on
/// loopback therefore observes a round trip of ~2x one_way_delay_ms without
/// OS traffic shaping.
///
/// Kernel TCP listeners (dotcp/dot/doh) provide the real-socket path; the
/// kernel's own SYN handling cannot be delayed from user space, so their
/// connect time on loopback is near zero. The emulated-link listeners
/// (emu-tcp/emu-dot/emu-doh, UDP) run the same protocol stacks over a
/// user-space reliable link whose SYN equivalent does traverse the delay
/// queue, which is what timing-sensitive tests use.

#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "doxbench/clock.hpp"
#include "doxbench/common.hpp"
#include "doxbench/dns/codec.hpp"
#include "doxbench/measurement.hpp"
#include "doxbench/net/emu.hpp"
#include "doxbench/net/http2.hpp"
#include "doxbench/net/socket.hpp"
#include "doxbench/quicish/engine.hpp"
#include "doxbench/quicish/wire.hpp"
#include "doxbench/tlsx/cert.hpp"
#include "doxbench/tlsx/context.hpp"
#include "doxbench/tlsx/engine.hpp"

namespace doxbench::mock
{

struct ZoneEntry
{
  std::string address; ///< IPv4 presentation form
  std::uint32_t ttlSeconds = 300;
};

using Zone = std::map<std::string, ZoneEntry>;

/// Datagram loss injection for the DoUDP listener.
struct DropPolicy
{
  bool dropFirstInboundPerFlow = false;
  double inboundProbability = 0.0;
  double outboundProbability = 0.0;
  std::uint64_t seed = 1;
};

struct MockConfig
{
  Zone zone;
  std::uint32_t oneWayDelayMs = 0;
  std::uint32_t ticketLifetimeS = tlsx::kMaxTicketLifetimeSeconds;
  bool ticketsEnabled = true;
  bool zeroRttEnabled = false;
  std::uint32_t certPaddingBytes = 0;
  bool forceTls12 = false;

  std::set<ProtocolKind> enabledProtocols = {ProtocolKind::DoUDP, ProtocolKind::DoTCP,
                                             ProtocolKind::DoT, ProtocolKind::DoH,
                                             ProtocolKind::DoQ};

  /// 0 requests an ephemeral port; read the bound one back via port().
  std::uint16_t doudpPort = 0;
  std::uint16_t dotcpPort = 0;
  std::uint16_t dotPort = 0;
  std::uint16_t dohPort = 0;
  std::uint16_t doqPort = 0;

  /// Emulated-link UDP endpoints for DoTCP/DoT/DoH.
  bool emuEndpoints = true;
  std::uint16_t emuTcpPort = 0;
  std::uint16_t emuDotPort = 0;
  std::uint16_t emuDohPort = 0;

  DropPolicy doudpDrop;
  std::string dohPath = "/dns-query";
  std::vector<std::string> doqAlpn = doqAlpnPreference();
  bool issueDoqTokens = true;
  std::string certCn = "mock.test";
  std::string bindHost = "127.0.0.1";
};

struct MockCounters
{
  std::uint64_t connectionsAccepted = 0;
  std::uint64_t datagramsReceived = 0;
  std::uint64_t queriesAnswered = 0;
  std::uint64_t resumptions = 0;
  std::uint64_t zeroRttAccepts = 0;
  std::uint64_t versionNegotiationsSent = 0;
  std::uint64_t droppedDatagrams = 0;
  std::uint64_t ticketsIssued = 0;
  /// High-water mark of simultaneously tracked connections (streams + QUIC).
  std::uint64_t peakConcurrent = 0;
};

/// \brief Running server handle. Binds in the constructor (throws
/// bind-failure/config-invalid), serves from a background thread, stops on
/// destruction.
class MockResolver
{
public:
  explicit MockResolver(MockConfig cfg) : cfg_(std::move(cfg))
  {
    if (cfg_.ticketLifetimeS > tlsx::kMaxTicketLifetimeSeconds)
    {
      throw DxError(Errc::config_invalid, "ticket lifetime above the 7-day maximum");
    }
    for (auto &[name, entry] : cfg_.zone)
    {
      zone_[normalizeName(name)] = entry;
    }

    cert_ = tlsx::makeSelfSignedCert(cfg_.certCn, cfg_.certPaddingBytes);
    dropRng_.seed(cfg_.doudpDrop.seed);
    buildContexts();
    bindSockets();

    thread_ = std::thread([this] { loop(); });
  }

  MockResolver(const MockResolver &) = delete;
  MockResolver &operator=(const MockResolver &) = delete;

  ~MockResolver() { stop(); }

  void stop()
  {
    bool expected = false;
    if (stopping_.compare_exchange_strong(expected, true) && thread_.joinable())
    {
      thread_.join();
    }
  }

  /// Bound kernel-listener port, or 0 when the protocol is disabled.
  std::uint16_t port(ProtocolKind p) const
  {
    switch (p)
    {
      case ProtocolKind::DoUDP: return doudpPort_;
      case ProtocolKind::DoTCP: return dotcpPort_;
      case ProtocolKind::DoT: return dotPort_;
      case ProtocolKind::DoH: return dohPort_;
      case ProtocolKind::DoQ: return doqPort_;
    }
    return 0;
  }

  /// Bound emulated-link port for DoTCP/DoT/DoH, or 0.
  std::uint16_t emuPort(ProtocolKind p) const
  {
    switch (p)
    {
      case ProtocolKind::DoTCP: return emuTcpPort_;
      case ProtocolKind::DoT: return emuDotPort_;
      case ProtocolKind::DoH: return emuDohPort_;
      default: return 0;
    }
  }

  const std::string &certPem() const { return cert_.certPem; }

  const std::string &host() const { return cfg_.bindHost; }

  MockCounters counters() const
  {
    MockCounters c;
    c.connectionsAccepted = connectionsAccepted_.load();
    c.datagramsReceived = datagramsReceived_.load();
    c.queriesAnswered = queriesAnswered_.load();
    c.resumptions = resumptions_.load();
    c.zeroRttAccepts = zeroRttAccepts_.load();
    c.versionNegotiationsSent = versionNegotiationsSent_.load();
    c.droppedDatagrams = droppedDatagrams_.load();
    c.ticketsIssued = ticketsIssued_.load();
    c.peakConcurrent = peakConcurrent_.load();
    return c;
  }

private:
  // ---- setup ----------------------------------------------------------

  static std::string normalizeName(const std::string &name)
  {
    std::string n = toLower(name);
    if (!n.empty() && n.back() == '.')
    {
      n.pop_back();
    }
    return n;
  }

  bool enabled(ProtocolKind p) const { return cfg_.enabledProtocols.count(p) > 0; }

  void buildContexts()
  {
    tlsx::ServerTlsOptions base;
    base.certPem = cert_.certPem;
    base.keyPem = cert_.keyPem;
    base.numTickets = cfg_.ticketsEnabled ? 2 : 0;
    base.ticketLifetimeSeconds = cfg_.ticketLifetimeS;
    base.maxEarlyDataBytes = cfg_.zeroRttEnabled ? 16384 : 0;
    base.forceTls12 = cfg_.forceTls12;

    tlsx::ServerTlsOptions dot = base;
    dotCtx_.emplace(tlsx::TlsContext::server(dot));

    tlsx::ServerTlsOptions doh = base;
    doh.alpn = {"h2"};
    doh.requireAlpn = true;
    dohCtx_.emplace(tlsx::TlsContext::server(doh));

    tlsx::ServerTlsOptions doq = base;
    doq.alpn = cfg_.doqAlpn;
    doq.requireAlpn = true;
    doqCtx_.emplace(tlsx::TlsContext::server(doq));
  }

  void bindSockets()
  {
    const std::string &h = cfg_.bindHost;
    if (enabled(ProtocolKind::DoUDP))
    {
      doudpSock_ = net::UdpSocket::bind(h, cfg_.doudpPort);
      doudpPort_ = doudpSock_->localPort();
    }
    if (enabled(ProtocolKind::DoQ))
    {
      doqSock_ = net::UdpSocket::bind(h, cfg_.doqPort);
      doqPort_ = doqSock_->localPort();
    }
    if (enabled(ProtocolKind::DoTCP))
    {
      dotcpListener_ = net::TcpListener::bind(h, cfg_.dotcpPort);
      dotcpPort_ = dotcpListener_->localPort();
    }
    if (enabled(ProtocolKind::DoT))
    {
      dotListener_ = net::TcpListener::bind(h, cfg_.dotPort);
      dotPort_ = dotListener_->localPort();
    }
    if (enabled(ProtocolKind::DoH))
    {
      dohListener_ = net::TcpListener::bind(h, cfg_.dohPort);
      dohPort_ = dohListener_->localPort();
    }
    if (cfg_.emuEndpoints)
    {
      if (enabled(ProtocolKind::DoTCP))
      {
        emuTcpSock_ = net::UdpSocket::bind(h, cfg_.emuTcpPort);
        emuTcpPort_ = emuTcpSock_->localPort();
      }
      if (enabled(ProtocolKind::DoT))
      {
        emuDotSock_ = net::UdpSocket::bind(h, cfg_.emuDotPort);
        emuDotPort_ = emuDotSock_->localPort();
      }
      if (enabled(ProtocolKind::DoH))
      {
        emuDohSock_ = net::UdpSocket::bind(h, cfg_.emuDohPort);
        emuDohPort_ = emuDohSock_->localPort();
      }
    }
  }

  // ---- DNS answering --------------------------------------------------

  Bytes answerFor(const Bytes &queryWire)
  {
    auto q = dns::decodeQuery(queryWire);
    dns::DnsResponseSpec spec;
    spec.id = q.id;
    spec.qname = q.qname;
    spec.qtype = q.qtype;
    spec.recursionDesired = q.recursionDesired;
    auto it = zone_.find(normalizeName(q.qname));
    if (it == zone_.end())
    {
      spec.rcode = dns::RCode::NXDOMAIN;
    }
    else if (q.qtype == dns::RType::A)
    {
      spec.answers.push_back({q.qname, dns::RType::A, it->second.ttlSeconds,
                              dns::aRdata(it->second.address)});
    }
    // name exists, other type: NOERROR with an empty answer section
    queriesAnswered_.fetch_add(1);
    return dns::encodeResponse(spec);
  }

  // ---- event loop plumbing --------------------------------------------

  std::uint64_t nowMs() const
  {
    return static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - epoch_)
            .count());
  }

  struct Action
  {
    std::uint64_t due;
    std::uint64_t seq;
    std::function<void()> fn;

    bool operator>(const Action &o) const
    {
      return std::tie(due, seq) > std::tie(o.due, o.seq);
    }
  };

  void schedule(std::uint64_t due, std::function<void()> fn)
  {
    actions_.push(Action{due, actionSeq_++, std::move(fn)});
  }

  void scheduleDelayed(std::function<void()> fn)
  {
    schedule(nowMs() + cfg_.oneWayDelayMs, std::move(fn));
  }

  // ---- stream connections (kernel TCP and emulated link) --------------

  enum class App
  {
    Plain, ///< DoTCP: 2-byte framed DNS straight on the link
    Dot,   ///< framed DNS inside TLS
    Doh,   ///< HTTP/2 inside TLS
  };

  struct StreamConn
  {
    App app = App::Plain;
    // exactly one link is set
    std::optional<net::TcpStream> sock;
    std::optional<net::EmuConn> emu;
    net::UdpSocket *emuSock = nullptr;
    net::Endpoint peer;

    std::optional<tlsx::TlsEngine> tls;
    std::optional<net::h2::H2Server> h2;
    Bytes frameBuf;
    bool tlsDoneSeen = false;
    bool peerEof = false;
    std::uint32_t pendingWrites = 0;
    bool dead = false;
  };

  tlsx::TlsContext &ctxFor(App app)
  {
    return app == App::Doh ? *dohCtx_ : *dotCtx_;
  }

  std::uint64_t newStreamConn(App app)
  {
    std::uint64_t id = nextConnId_++;
    StreamConn c;
    c.app = app;
    if (app != App::Plain)
    {
      c.tls.emplace(tlsx::TlsEngine::server(ctxFor(app)));
    }
    if (app == App::Doh)
    {
      c.h2.emplace();
    }
    conns_.emplace(id, std::move(c));
    connectionsAccepted_.fetch_add(1);
    bumpPeak();
    return id;
  }

  // Runs on the loop thread; the container sizes are only touched there.
  void bumpPeak()
  {
    std::uint64_t active = conns_.size() + doqConns_.size();
    std::uint64_t prev = peakConcurrent_.load();
    while (active > prev && !peakConcurrent_.compare_exchange_weak(prev, active))
    {
    }
  }

  StreamConn *conn(std::uint64_t id)
  {
    auto it = conns_.find(id);
    if (it == conns_.end() || it->second.dead)
    {
      return nullptr;
    }
    return &it->second;
  }

  /// Queue link-level bytes for delivery to the peer after the outbound
  /// delay. For the emulated link the delay applies per datagram instead,
  /// inside pumpEmuOut.
  void scheduleStreamWrite(std::uint64_t id, Bytes wire)
  {
    StreamConn *c = conn(id);
    if (c == nullptr)
    {
      return;
    }
    if (c->sock)
    {
      c->pendingWrites += 1;
      scheduleDelayed([this, id, wire = std::move(wire)] {
        StreamConn *cc = conn(id);
        if (cc == nullptr)
        {
          return;
        }
        cc->pendingWrites -= 1;
        try
        {
          cc->sock->sendAll(wire, net::Deadline::in(2000));
        }
        catch (const DxError &)
        {
          cc->dead = true;
        }
      });
    }
    else if (c->emu)
    {
      c->emu->send(wire, nowMs());
      pumpEmuOut(id);
    }
  }

  /// Emu datagrams leave one delay unit after they were produced.
  void pumpEmuOut(std::uint64_t id)
  {
    StreamConn *c = conn(id);
    if (c == nullptr || !c->emu)
    {
      return;
    }
    for (auto &d : c->emu->takeOutbound())
    {
      Bytes wire = d.encode();
      net::UdpSocket *sock = c->emuSock;
      net::Endpoint peer = c->peer;
      c->pendingWrites += 1;
      scheduleDelayed([this, id, sock, peer, wire = std::move(wire)] {
        if (StreamConn *cc = conn(id))
        {
          cc->pendingWrites -= 1;
        }
        sock->sendTo(wire, peer);
      });
    }
  }

  /// Application-level handling of decrypted/delivered stream bytes.
  void onStreamBytes(std::uint64_t id, const Bytes &bytes, std::uint64_t now)
  {
    StreamConn *c = conn(id);
    if (c == nullptr)
    {
      return;
    }
    if (c->app == App::Plain)
    {
      c->frameBuf.insert(c->frameBuf.end(), bytes.begin(), bytes.end());
      drainPlainFrames(id);
      return;
    }

    // TLS path
    if (!bytes.empty())
    {
      c->tls->feed(bytes);
    }
    if (!c->tls->handshakeDone())
    {
      auto st = c->tls->drive();
      if (st == tlsx::HsStatus::Failed)
      {
        c->dead = true;
        return;
      }
    }
    Bytes early = c->tls->takeEarlyApp();
    if (!early.empty())
    {
      handleAppData(id, early, /*earlyPhase=*/true);
    }
    if (c->tls->handshakeDone() && !c->tlsDoneSeen)
    {
      c->tlsDoneSeen = true;
      if (c->tls->resumed())
      {
        resumptions_.fetch_add(1);
      }
      if (c->tls->earlyDataAccepted())
      {
        zeroRttAccepts_.fetch_add(1);
      }
      if (cfg_.ticketsEnabled)
      {
        ticketsIssued_.fetch_add(2); // matches the context's ticket count
      }
    }
    Bytes app = c->tls->readApp();
    if (!app.empty())
    {
      handleAppData(id, app, /*earlyPhase=*/false);
    }
    flushTlsOut(id);
    (void)now;
  }

  void drainPlainFrames(std::uint64_t id)
  {
    StreamConn *c = conn(id);
    while (c != nullptr && dns::hasCompleteFrame(c->frameBuf))
    {
      auto [payload, rest] = dns::unframe(c->frameBuf);
      c->frameBuf = std::move(rest);
      Bytes resp;
      try
      {
        resp = answerFor(payload);
      }
      catch (const DxError &)
      {
        c->dead = true;
        return;
      }
      scheduleStreamWrite(id, dns::frame(resp));
      c = conn(id);
    }
  }

  /// DNS payloads above TLS: framed messages for DoT, HTTP/2 for DoH.
  /// In the early phase replies try to ride the server's first flight.
  void handleAppData(std::uint64_t id, const Bytes &data, bool earlyPhase)
  {
    StreamConn *c = conn(id);
    if (c == nullptr)
    {
      return;
    }
    if (c->app == App::Dot)
    {
      c->frameBuf.insert(c->frameBuf.end(), data.begin(), data.end());
      while (dns::hasCompleteFrame(c->frameBuf))
      {
        auto [payload, rest] = dns::unframe(c->frameBuf);
        c->frameBuf = std::move(rest);
        Bytes resp;
        try
        {
          resp = dns::frame(answerFor(payload));
        }
        catch (const DxError &)
        {
          c->dead = true;
          return;
        }
        writeTlsApp(id, resp, earlyPhase);
      }
      return;
    }

    // DoH
    c->h2->feed(data);
    if (c->h2->failed())
    {
      // GOAWAY already queued by the session; flush it below
    }
    for (auto &req : c->h2->takeRequests())
    {
      net::h2::Response resp;
      std::string basePath = req.path;
      std::string query;
      if (auto qpos = basePath.find('?'); qpos != std::string::npos)
      {
        query = basePath.substr(qpos + 1);
        basePath.resize(qpos);
      }
      std::optional<Bytes> wire;
      if (req.method == "GET")
      {
        // RFC 8484 GET: the DNS message rides in the dns= query parameter.
        for (std::size_t pos = 0; pos < query.size();)
        {
          std::size_t amp = query.find('&', pos);
          std::string param = query.substr(pos, amp == std::string::npos ? std::string::npos : amp - pos);
          if (param.rfind("dns=", 0) == 0)
          {
            wire = base64UrlDecode(param.substr(4));
            break;
          }
          if (amp == std::string::npos)
          {
            break;
          }
          pos = amp + 1;
        }
      }
      else
      {
        wire = req.body;
      }
      if (basePath != cfg_.dohPath)
      {
        resp.status = 404;
        resp.contentType = "text/plain";
        resp.body = Bytes{'n', 'o', 't', ' ', 'f', 'o', 'u', 'n', 'd'};
      }
      else if (!wire)
      {
        resp.status = 400;
        resp.contentType = "text/plain";
        resp.body = Bytes{'b', 'a', 'd', ' ', 'd', 'n', 's'};
      }
      else
      {
        try
        {
          resp.status = 200;
          resp.contentType = "application/dns-message";
          resp.body = answerFor(*wire);
        }
        catch (const DxError &)
        {
          resp.status = 400;
          resp.contentType = "text/plain";
          resp.body = Bytes{'b', 'a', 'd', ' ', 'd', 'n', 's'};
        }
      }
      c->h2->respond(req.streamId, resp);
    }
    Bytes out = c->h2->takeOutbound();
    if (!out.empty())
    {
      writeTlsApp(id, out, earlyPhase);
    }
  }

  void writeTlsApp(std::uint64_t id, const Bytes &data, bool earlyPhase)
  {
    StreamConn *c = conn(id);
    if (c == nullptr)
    {
      return;
    }
    if (earlyPhase && c->tls->tryWriteEarly(data))
    {
      return;
    }
    c->tls->writeApp(data);
  }

  void flushTlsOut(std::uint64_t id)
  {
    StreamConn *c = conn(id);
    if (c == nullptr || !c->tls)
    {
      return;
    }
    Bytes out = c->tls->takeOutbound();
    if (!out.empty())
    {
      scheduleStreamWrite(id, std::move(out));
    }
  }

  // ---- kernel TCP dispatch --------------------------------------------

  void onListenerReadable(net::TcpListener &listener, App app)
  {
    while (auto accepted = listener.tryAccept())
    {
      std::uint64_t id = newStreamConn(app);
      conns_.at(id).sock = std::move(*accepted);
    }
  }

  void onKernelConnReadable(std::uint64_t id)
  {
    StreamConn *c = conn(id);
    if (c == nullptr || !c->sock)
    {
      return;
    }
    for (;;)
    {
      std::optional<Bytes> chunk;
      try
      {
        chunk = c->sock->tryRecv();
      }
      catch (const DxError &)
      {
        c->dead = true;
        return;
      }
      if (!chunk)
      {
        return; // drained
      }
      if (chunk->empty())
      {
        c->peerEof = true;
        return;
      }
      c->pendingWrites += 1; // keep the conn alive until processing ran
      scheduleDelayed([this, id, data = std::move(*chunk)] {
        if (StreamConn *cc = conn(id))
        {
          cc->pendingWrites -= 1;
        }
        onStreamBytes(id, data, nowMs());
      });
    }
  }

  // ---- emulated-link dispatch -----------------------------------------

  struct EmuKey
  {
    std::string peer;
    std::uint32_t connId;

    bool operator<(const EmuKey &o) const
    {
      return std::tie(peer, connId) < std::tie(o.peer, o.connId);
    }
  };

  void onEmuReadable(net::UdpSocket &sock, App app)
  {
    net::UdpSocket *sp = &sock; // members outlive the loop; parameters do not
    while (auto dg = sock.tryRecv())
    {
      datagramsReceived_.fetch_add(1);
      auto decoded = net::EmuDatagram::decode(dg->payload);
      if (!decoded)
      {
        continue;
      }
      net::Endpoint from = dg->from;
      scheduleDelayed([this, sp, app, from, d = std::move(*decoded)] {
        handleEmuDatagram(*sp, app, from, d);
      });
    }
  }

  void handleEmuDatagram(net::UdpSocket &sock, App app, const net::Endpoint &from,
                         const net::EmuDatagram &d)
  {
    std::uint64_t now = nowMs();
    EmuKey key{from.str(), d.connId};
    auto idIt = emuIndex_.find(key);
    if (idIt == emuIndex_.end())
    {
      if (d.type != net::EmuType::Syn)
      {
        return; // stray segment for a connection we no longer track
      }
      std::uint64_t id = newStreamConn(app);
      StreamConn &c = conns_.at(id);
      c.emu.emplace(net::EmuConn::serverFromSyn(d, now));
      c.emuSock = &sock;
      c.peer = from;
      emuIndex_.emplace(key, id);
      pumpEmuOut(id);
      return;
    }
    std::uint64_t id = idIt->second;
    StreamConn *c = conn(id);
    if (c == nullptr || !c->emu)
    {
      return;
    }
    c->emu->onDatagram(d, now);
    Bytes delivered = c->emu->takeDelivered();
    if (!delivered.empty())
    {
      onStreamBytes(id, delivered, now);
    }
    if (c->emu->peerClosed())
    {
      c->peerEof = true;
    }
    pumpEmuOut(id);
  }

  // ---- DoUDP ----------------------------------------------------------

  void onDoudpReadable()
  {
    while (auto dg = doudpSock_->tryRecv())
    {
      datagramsReceived_.fetch_add(1);
      if (shouldDropInbound(dg->from))
      {
        droppedDatagrams_.fetch_add(1);
        continue;
      }
      net::Endpoint from = dg->from;
      scheduleDelayed([this, from, q = std::move(dg->payload)] {
        Bytes resp;
        try
        {
          resp = answerFor(q);
        }
        catch (const DxError &)
        {
          return; // junk datagram: stay silent
        }
        if (dropRoll() < cfg_.doudpDrop.outboundProbability)
        {
          droppedDatagrams_.fetch_add(1);
          return;
        }
        scheduleDelayed([this, from, resp = std::move(resp)] {
          doudpSock_->sendTo(resp, from);
        });
      });
    }
  }

  bool shouldDropInbound(const net::Endpoint &from)
  {
    if (cfg_.doudpDrop.dropFirstInboundPerFlow && seenFlows_.insert(from.str()).second)
    {
      return true;
    }
    return dropRoll() < cfg_.doudpDrop.inboundProbability;
  }

  double dropRoll()
  {
    return std::uniform_real_distribution<double>(0.0, 1.0)(dropRng_);
  }

  // ---- DoQ ------------------------------------------------------------

  struct DoqConn
  {
    quicish::ServerEngine engine;
    net::Endpoint peer;
    Bytes frameBuf;
    Bytes earlyBuf;
    bool doneSeen = false;
    bool dead = false;
  };

  void onDoqReadable()
  {
    while (auto dg = doqSock_->tryRecv())
    {
      datagramsReceived_.fetch_add(1);
      net::Endpoint from = dg->from;
      scheduleDelayed([this, from, d = std::move(dg->payload)] {
        handleDoqDatagram(from, d);
      });
    }
  }

  void handleDoqDatagram(const net::Endpoint &from, const Bytes &datagram)
  {
    std::uint64_t now = nowMs();
    std::string key = from.str();
    auto it = doqConns_.find(key);
    if (it == doqConns_.end())
    {
      auto version = quicish::peekVersion(datagram);
      if (!version)
      {
        return; // short header for an unknown connection
      }
      if (*version != quicish::kVersion)
      {
        // Any other version, including a scanner's invalid 0, draws a
        // Version Negotiation, but never for datagrams under the minimum
        // size: answering those would invert the amplification bound.
        auto dcid = quicish::peekDcid(datagram);
        auto scid = quicish::peekScid(datagram);
        if (dcid && scid && datagram.size() >= quicish::kMinInitialDatagram)
        {
          Bytes vn = quicish::encodeVersionNegotiation(*dcid, *scid, {quicish::kVersion});
          versionNegotiationsSent_.fetch_add(1);
          scheduleDelayed([this, from, vn = std::move(vn)] { doqSock_->sendTo(vn, from); });
        }
        return;
      }
      quicish::ServerEngine::Options opts{*doqCtx_,
                                          [this](const Bytes &t) { return doqTokens_.count(t) > 0; },
                                          tokenRng_()};
      it = doqConns_.emplace(key, DoqConn{quicish::ServerEngine(std::move(opts), now), from, {}, {}, false, false})
               .first;
      connectionsAccepted_.fetch_add(1);
      bumpPeak();
    }

    DoqConn &c = it->second;
    c.engine.onDatagram(datagram, now);

    Bytes early = c.engine.readEarlyApp();
    if (!early.empty())
    {
      c.earlyBuf.insert(c.earlyBuf.end(), early.begin(), early.end());
      while (dns::hasCompleteFrame(c.earlyBuf))
      {
        auto [payload, rest] = dns::unframe(c.earlyBuf);
        c.earlyBuf = std::move(rest);
        try
        {
          Bytes resp = dns::frame(answerFor(payload));
          if (!c.engine.writeEarlyApp(resp))
          {
            c.engine.writeApp(resp, now);
          }
        }
        catch (const DxError &)
        {
          c.dead = true;
        }
      }
    }

    if (c.engine.handshakeDone() && !c.doneSeen)
    {
      c.doneSeen = true;
      if (c.engine.resumedSession())
      {
        resumptions_.fetch_add(1);
      }
      if (c.engine.sawEarlyData())
      {
        zeroRttAccepts_.fetch_add(1);
      }
      if (cfg_.ticketsEnabled)
      {
        ticketsIssued_.fetch_add(2);
      }
      if (cfg_.issueDoqTokens)
      {
        Bytes token(16);
        for (auto &b : token)
        {
          b = static_cast<std::uint8_t>(tokenRng_());
        }
        doqTokens_.insert(token);
        c.engine.issueToken(token);
      }
    }

    Bytes app = c.engine.readApp();
    if (!app.empty())
    {
      c.frameBuf.insert(c.frameBuf.end(), app.begin(), app.end());
      while (dns::hasCompleteFrame(c.frameBuf))
      {
        auto [payload, rest] = dns::unframe(c.frameBuf);
        c.frameBuf = std::move(rest);
        try
        {
          c.engine.writeApp(dns::frame(answerFor(payload)), now);
        }
        catch (const DxError &)
        {
          c.dead = true;
        }
      }
    }

    pumpDoqOut(c, now);
    if (c.dead || c.engine.failed() || c.engine.peerClosed())
    {
      doqConns_.erase(it);
    }
  }

  void pumpDoqOut(DoqConn &c, std::uint64_t now)
  {
    for (auto &d : c.engine.takeDatagrams(now))
    {
      net::Endpoint peer = c.peer;
      scheduleDelayed([this, peer, wire = std::move(d)] { doqSock_->sendTo(wire, peer); });
    }
  }

  // ---- main loop ------------------------------------------------------

  void loop()
  {
    while (!stopping_.load())
    {
      std::uint64_t now = nowMs();

      while (!actions_.empty() && actions_.top().due <= now)
      {
        auto fn = std::move(const_cast<Action &>(actions_.top()).fn);
        actions_.pop();
        try
        {
          fn();
        }
        catch (const DxError &)
        {
          // a single bad flow must not take the server down
        }
      }

      fireConnTimers(now);
      gc();

      int timeout = 20;
      if (!actions_.empty())
      {
        std::uint64_t due = actions_.top().due;
        timeout = due <= now ? 0 : static_cast<int>(std::min<std::uint64_t>(due - now, 20));
      }
      if (auto t = earliestConnTimer())
      {
        timeout = static_cast<int>(std::min<std::uint64_t>(
            static_cast<std::uint64_t>(timeout), *t <= now ? 0 : *t - now));
      }

      pollOnce(timeout);
    }
  }

  void fireConnTimers(std::uint64_t now)
  {
    for (auto &[id, c] : conns_)
    {
      if (c.emu && !c.dead)
      {
        auto t = c.emu->nextTimerAt();
        if (t && *t <= now)
        {
          c.emu->onTimer(now);
          pumpEmuOut(id);
        }
      }
    }
    for (auto &[key, c] : doqConns_)
    {
      auto t = c.engine.nextTimerAt();
      if (t && *t <= now)
      {
        c.engine.onTimer(now);
        pumpDoqOut(c, now);
      }
    }
  }

  std::optional<std::uint64_t> earliestConnTimer() const
  {
    std::optional<std::uint64_t> best;
    for (const auto &[id, c] : conns_)
    {
      if (c.emu && !c.dead)
      {
        auto t = c.emu->nextTimerAt();
        if (t && (!best || *t < *best))
        {
          best = t;
        }
      }
    }
    for (const auto &[key, c] : doqConns_)
    {
      auto t = c.engine.nextTimerAt();
      if (t && (!best || *t < *best))
      {
        best = t;
      }
    }
    return best;
  }

  void gc()
  {
    for (auto it = conns_.begin(); it != conns_.end();)
    {
      StreamConn &c = it->second;
      bool remove = false;
      if (c.dead && c.pendingWrites == 0)
      {
        remove = true;
      }
      else if (c.peerEof && c.pendingWrites == 0)
      {
        if (c.sock)
        {
          remove = true;
        }
        else if (c.emu && c.emu->drained())
        {
          remove = true;
        }
      }
      if (remove)
      {
        if (c.emu)
        {
          emuIndex_.erase(EmuKey{c.peer.str(), c.emu->connId()});
        }
        it = conns_.erase(it);
      }
      else
      {
        ++it;
      }
    }
  }

  void pollOnce(int timeoutMs)
  {
    std::vector<pollfd> fds;
    std::vector<std::function<void()>> handlers;
    auto add = [&](int fd, std::function<void()> handler) {
      fds.push_back({fd, POLLIN, 0});
      handlers.push_back(std::move(handler));
    };

    if (doudpSock_)
    {
      add(doudpSock_->fd(), [this] { onDoudpReadable(); });
    }
    if (doqSock_)
    {
      add(doqSock_->fd(), [this] { onDoqReadable(); });
    }
    if (dotcpListener_)
    {
      add(dotcpListener_->fd(), [this] { onListenerReadable(*dotcpListener_, App::Plain); });
    }
    if (dotListener_)
    {
      add(dotListener_->fd(), [this] { onListenerReadable(*dotListener_, App::Dot); });
    }
    if (dohListener_)
    {
      add(dohListener_->fd(), [this] { onListenerReadable(*dohListener_, App::Doh); });
    }
    if (emuTcpSock_)
    {
      add(emuTcpSock_->fd(), [this] { onEmuReadable(*emuTcpSock_, App::Plain); });
    }
    if (emuDotSock_)
    {
      add(emuDotSock_->fd(), [this] { onEmuReadable(*emuDotSock_, App::Dot); });
    }
    if (emuDohSock_)
    {
      add(emuDohSock_->fd(), [this] { onEmuReadable(*emuDohSock_, App::Doh); });
    }
    for (auto &[id, c] : conns_)
    {
      if (c.sock && !c.dead && !c.peerEof)
      {
        std::uint64_t cid = id;
        add(c.sock->fd(), [this, cid] { onKernelConnReadable(cid); });
      }
    }

    int rc = ::poll(fds.data(), fds.size(), timeoutMs);
    if (rc <= 0)
    {
      return;
    }
    for (std::size_t i = 0; i < fds.size(); ++i)
    {
      if ((fds[i].revents & (POLLIN | POLLERR | POLLHUP)) != 0)
      {
        try
        {
          handlers[i]();
        }
        catch (const DxError &)
        {
        }
      }
    }
  }

  // ---- state ----------------------------------------------------------

  MockConfig cfg_;
  Zone zone_;
  tlsx::CertMaterial cert_;
  std::optional<tlsx::TlsContext> dotCtx_;
  std::optional<tlsx::TlsContext> dohCtx_;
  std::optional<tlsx::TlsContext> doqCtx_;

  std::optional<net::UdpSocket> doudpSock_;
  std::optional<net::UdpSocket> doqSock_;
  std::optional<net::TcpListener> dotcpListener_;
  std::optional<net::TcpListener> dotListener_;
  std::optional<net::TcpListener> dohListener_;
  std::optional<net::UdpSocket> emuTcpSock_;
  std::optional<net::UdpSocket> emuDotSock_;
  std::optional<net::UdpSocket> emuDohSock_;

  std::uint16_t doudpPort_ = 0;
  std::uint16_t dotcpPort_ = 0;
  std::uint16_t dotPort_ = 0;
  std::uint16_t dohPort_ = 0;
  std::uint16_t doqPort_ = 0;
  std::uint16_t emuTcpPort_ = 0;
  std::uint16_t emuDotPort_ = 0;
  std::uint16_t emuDohPort_ = 0;

  SteadyTime epoch_ = std::chrono::steady_clock::now();
  std::priority_queue<Action, std::vector<Action>, std::greater<Action>> actions_;
  std::uint64_t actionSeq_ = 0;

  std::map<std::uint64_t, StreamConn> conns_;
  std::uint64_t nextConnId_ = 1;
  std::map<EmuKey, std::uint64_t> emuIndex_;
  std::map<std::string, DoqConn> doqConns_;
  std::set<Bytes> doqTokens_;
  std::set<std::string> seenFlows_;

  std::mt19937_64 dropRng_{1};
  std::mt19937_64 tokenRng_{0xD0CD0CD0CD0CULL};

  std::atomic<std::uint64_t> connectionsAccepted_{0};
  std::atomic<std::uint64_t> datagramsReceived_{0};
  std::atomic<std::uint64_t> queriesAnswered_{0};
  std::atomic<std::uint64_t> resumptions_{0};
  std::atomic<std::uint64_t> zeroRttAccepts_{0};
  std::atomic<std::uint64_t> versionNegotiationsSent_{0};
  std::atomic<std::uint64_t> droppedDatagrams_{0};
  std::atomic<std::uint64_t> ticketsIssued_{0};
  std::atomic<std::uint64_t> peakConcurrent_{0};

  std::atomic<bool> stopping_{false};
  std::thread thread_;
};

} // namespace doxbench::mock
