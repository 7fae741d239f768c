// Copyright 2026 The doxbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <vector>

#include "doxbench/quicish/engine.hpp"
#include "doxbench/quicish/wire.hpp"
#include "doxbench/tlsx/cert.hpp"

using namespace doxbench;
using namespace doxbench::quicish;
using namespace doxbench::tlsx;

namespace
{

struct Rig
{
  CertMaterial cert;
  TlsContext serverCtx;
  TlsContext clientCtx;

  static Rig make(std::size_t certPadding = 0, std::uint32_t maxEarlyData = 0)
  {
    CertMaterial cert = makeSelfSignedCert("doq.test", certPadding);
    ServerTlsOptions sopts;
    sopts.certPem = cert.certPem;
    sopts.keyPem = cert.keyPem;
    sopts.alpn = {"doq"};
    sopts.requireAlpn = true;
    sopts.maxEarlyDataBytes = maxEarlyData;
    ClientTlsOptions copts;
    copts.trustPem = cert.certPem;
    copts.alpn = {"doq"};
    TlsContext serverCtx = TlsContext::server(sopts);
    TlsContext clientCtx = TlsContext::client(copts);
    return Rig{std::move(cert), std::move(serverCtx), std::move(clientCtx)};
  }

  ClientEngine::Options clientOpts() const
  {
    ClientEngine::Options o{clientCtx, {}, {}, kVersion, {}, 1};
    o.tls.sniName = "doq.test";
    return o;
  }

  ServerEngine::Options serverOpts(ServerEngine::TokenValidator validator = {}) const
  {
    ServerEngine::Options o{serverCtx, std::move(validator), 2};
    return o;
  }
};

/// Scripted network: fixed one-way delay, optional drop of the first
/// client datagram, and a running anti-amplification audit.
struct Sim
{
  std::uint64_t now = 0;
  std::uint64_t oneWayMs = 25;
  bool dropFirstClientDatagram = false;
  bool droppedOne = false;

  struct Ev
  {
    std::uint64_t at;
    bool toServer;
    Bytes datagram;
  };
  std::vector<Ev> queue;

  std::uint64_t serverSent = 0;
  std::uint64_t deliveredToServer = 0;
  bool ampViolated = false;

  void collect(ClientEngine &c, ServerEngine &s)
  {
    for (auto &d : c.takeDatagrams(now))
    {
      if (dropFirstClientDatagram && !droppedOne)
      {
        droppedOne = true;
        continue;
      }
      queue.push_back({now + oneWayMs, true, std::move(d)});
    }
    auto sOut = s.takeDatagrams(now);
    for (auto &d : sOut)
    {
      serverSent += d.size();
      if (!s.validated() && serverSent > 3 * deliveredToServer)
      {
        ampViolated = true;
      }
      queue.push_back({now + oneWayMs, false, std::move(d)});
    }
  }

  /// Advances until `untilMs` or quiescence. Returns the final sim time.
  std::uint64_t pump(ClientEngine &c, ServerEngine &s, std::uint64_t untilMs)
  {
    collect(c, s);
    for (int guard = 0; guard < 10000; ++guard)
    {
      std::optional<std::uint64_t> next;
      for (const auto &ev : queue)
      {
        if (!next || ev.at < *next)
        {
          next = ev.at;
        }
      }
      if (auto t = c.nextTimerAt(); t && (!next || *t < *next))
      {
        next = *t;
      }
      if (auto t = s.nextTimerAt(); t && (!next || *t < *next))
      {
        next = *t;
      }
      if (!next || *next > untilMs)
      {
        break;
      }
      now = *next;
      c.onTimer(now);
      s.onTimer(now);
      std::vector<Ev> due;
      for (auto it = queue.begin(); it != queue.end();)
      {
        if (it->at <= now)
        {
          due.push_back(std::move(*it));
          it = queue.erase(it);
        }
        else
        {
          ++it;
        }
      }
      for (auto &ev : due)
      {
        if (ev.toServer)
        {
          deliveredToServer += ev.datagram.size();
          s.onDatagram(ev.datagram, now);
        }
        else
        {
          c.onDatagram(ev.datagram, now);
        }
      }
      collect(c, s);
    }
    return now;
  }
};

} // namespace

TEST_CASE("packet wire form round-trips", "[quicish]")
{
  Packet p;
  p.type = PacketType::Initial;
  p.dcid = Bytes(8, 0xAA);
  p.scid = Bytes(8, 0xBB);
  p.token = {1, 2, 3};
  p.packetNumber = 7;
  p.frames.push_back(AckFrame{1234});
  p.frames.push_back(CarrierFrame{10, {0xDE, 0xAD}});
  p.frames.push_back(NewTokenFrame{{9, 9}});
  p.frames.push_back(CloseFrame{3, "bye"});
  p.frames.push_back(DoneFrame{});

  Bytes wire = encodePacket(p);
  // long form and fixed bits, Initial type, 4-byte packet number encoding
  CHECK((wire[0] & 0x80) != 0);
  CHECK((wire[0] & 0x40) != 0);

  auto parsed = decodeDatagram(wire);
  REQUIRE(parsed.size() == 1);
  auto &back = std::get<Packet>(parsed[0]);
  CHECK(back.type == PacketType::Initial);
  CHECK(back.version == kVersion);
  CHECK(back.dcid == p.dcid);
  CHECK(back.scid == p.scid);
  CHECK(back.token == p.token);
  CHECK(back.packetNumber == 7);
  REQUIRE(back.frames.size() == 5);
  CHECK(std::get<AckFrame>(back.frames[0]).cumOffset == 1234);
  CHECK(std::get<CarrierFrame>(back.frames[1]).offset == 10);
  CHECK(std::get<CarrierFrame>(back.frames[1]).data == Bytes{0xDE, 0xAD});
  CHECK(std::get<NewTokenFrame>(back.frames[2]).token == Bytes{9, 9});
  CHECK(std::get<CloseFrame>(back.frames[3]).reason == "bye");

  Packet s;
  s.type = PacketType::Short;
  s.dcid = Bytes(8, 0xCC);
  s.packetNumber = 42;
  s.frames.push_back(CarrierFrame{0, {1}});
  auto sWire = encodePacket(s);
  CHECK((sWire[0] & 0x80) == 0);
  auto sParsed = decodeDatagram(sWire);
  REQUIRE(sParsed.size() == 1);
  CHECK(std::get<Packet>(sParsed[0]).packetNumber == 42);
  CHECK(std::get<Packet>(sParsed[0]).dcid == s.dcid);
}

TEST_CASE("version negotiation packet echoes ids swapped under version zero", "[quicish]")
{
  Bytes clientDcid(8, 0x11);
  Bytes clientScid(8, 0x22);
  Bytes vn = encodeVersionNegotiation(clientDcid, clientScid, {kVersion, 0x00000001});

  CHECK((vn[0] & 0x80) != 0);
  CHECK(peekVersion(vn) == 0u);

  auto parsed = decodeDatagram(vn);
  REQUIRE(parsed.size() == 1);
  auto &v = std::get<VersionNegotiation>(parsed[0]);
  CHECK(v.dcid == clientScid); // ids swapped relative to the client packet
  CHECK(v.scid == clientDcid);
  REQUIRE(v.versions.size() == 2);
  CHECK(v.versions[0] == kVersion);
}

TEST_CASE("peek helpers read version and routing id without full parse", "[quicish]")
{
  Packet p;
  p.type = PacketType::Initial;
  p.dcid = Bytes(8, 0x5A);
  p.scid = Bytes(8, 0x5B);
  auto wire = encodePacket(p);
  CHECK(isLongHeader(wire));
  CHECK(peekVersion(wire) == kVersion);
  CHECK(peekDcid(wire) == p.dcid);

  CHECK_FALSE(peekVersion(Bytes{0x40, 0x01}).has_value());
  CHECK_FALSE(peekDcid(Bytes{}).has_value());
}

TEST_CASE("malformed datagrams throw instead of crashing", "[quicish]")
{
  CHECK_THROWS_AS(decodeDatagram(Bytes{0xC3, 0x00}), DxError);
  Packet p;
  p.type = PacketType::Initial;
  p.dcid = Bytes(8, 1);
  p.scid = Bytes(8, 2);
  p.frames.push_back(CarrierFrame{0, Bytes(100, 7)});
  Bytes wire = encodePacket(p);
  wire.resize(wire.size() - 40); // truncate mid-frame
  CHECK_THROWS_AS(decodeDatagram(wire), DxError);
}

TEST_CASE("client initial flight is padded to 1200 and carries the token", "[quicish]")
{
  auto rig = Rig::make();
  auto opts = rig.clientOpts();
  opts.token = Bytes{0x70, 0x71};
  ClientEngine client(std::move(opts), 0);
  auto datagrams = client.takeDatagrams(0);
  REQUIRE_FALSE(datagrams.empty());
  for (const auto &d : datagrams)
  {
    CHECK(d.size() >= kMinInitialDatagram);
    CHECK(d.size() <= 1500);
    auto parsed = decodeDatagram(d);
    auto &p = std::get<Packet>(parsed.at(0));
    CHECK(p.type == PacketType::Initial);
    CHECK(p.version == kVersion);
    CHECK(p.dcid.size() == kCidLen);
    CHECK(p.scid.size() == kCidLen);
  }
  auto first = decodeDatagram(datagrams[0]);
  CHECK_FALSE(std::get<Packet>(first.at(0)).token.empty());
}

TEST_CASE("fresh handshake completes in one round-trip with a small certificate", "[quicish]")
{
  auto rig = Rig::make();
  ClientEngine client(rig.clientOpts(), 0);
  ServerEngine server(rig.serverOpts(), 0);

  Sim sim;
  sim.pump(client, server, 5000);

  REQUIRE_FALSE(client.failed());
  REQUIRE(client.handshakeDone());
  REQUIRE(server.handshakeDone());
  CHECK(client.alpn() == "doq");
  CHECK_FALSE(client.resumed());
  CHECK(server.validated());
  CHECK_FALSE(sim.ampViolated);
  CHECK(client.retransmissions() == 0);

  // one-way delay 25 ms; transport and crypto complete together at 1 RTT
  CHECK(client.handshakeDoneAt() == 50);
  CHECK(server.handshakeDoneAt() == 75); // client Finished needs one more leg
}

TEST_CASE("application data flows after the handshake", "[quicish]")
{
  auto rig = Rig::make();
  ClientEngine client(rig.clientOpts(), 0);
  ServerEngine server(rig.serverOpts(), 0);
  Sim sim;
  sim.pump(client, server, 5000);
  REQUIRE(client.handshakeDone());

  client.writeApp({'q'}, sim.now);
  sim.pump(client, server, sim.now + 1000);
  CHECK(server.readApp() == Bytes{'q'});

  server.writeApp({'r'}, sim.now);
  sim.pump(client, server, sim.now + 1000);
  CHECK(client.readApp() == Bytes{'r'});

  // post-handshake datagrams use the short header
  client.writeApp({'x'}, sim.now);
  auto out = client.takeDatagrams(sim.now);
  REQUIRE_FALSE(out.empty());
  CHECK_FALSE(isLongHeader(out[0]));
}

TEST_CASE("oversized certificate flight stalls one extra round-trip", "[quicish]")
{
  // cert padding pushes the server flight past 3x1200
  auto rig = Rig::make(4000);
  ClientEngine client(rig.clientOpts(), 0);
  ServerEngine server(rig.serverOpts(), 0);
  Sim sim;
  sim.pump(client, server, 5000);

  REQUIRE(client.handshakeDone());
  CHECK_FALSE(sim.ampViolated);
  // t=0 CH; t=25 partial flight (amp-capped); t=50 client acks; t=75
  // validation lifts the cap; t=100 the remainder lands
  CHECK(client.handshakeDoneAt() == 100);
}

TEST_CASE("a presented token lifts the amplification cap immediately", "[quicish]")
{
  auto rig = Rig::make(4000);
  Bytes token = {9, 8, 7, 6};

  auto opts = rig.clientOpts();
  opts.token = token;
  ClientEngine client(std::move(opts), 0);
  ServerEngine server(rig.serverOpts([&](const Bytes &t) { return t == token; }), 0);
  Sim sim;
  sim.pump(client, server, 5000);

  REQUIRE(client.handshakeDone());
  CHECK(server.validated());
  CHECK(client.handshakeDoneAt() == 50); // no stall despite the oversized flight
}

TEST_CASE("server issues a token and the client captures it", "[quicish]")
{
  auto rig = Rig::make();
  ClientEngine client(rig.clientOpts(), 0);
  ServerEngine server(rig.serverOpts(), 0);
  Sim sim;
  sim.pump(client, server, 5000);
  REQUIRE(server.handshakeDone());

  server.issueToken({0xAB, 0xCD});
  sim.pump(client, server, sim.now + 1000);
  REQUIRE(client.receivedToken().has_value());
  CHECK(*client.receivedToken() == Bytes{0xAB, 0xCD});
}

TEST_CASE("session tickets resume and 0-RTT answers in one round-trip", "[quicish]")
{
  auto rig = Rig::make(0, 16384);

  std::vector<TicketData> tickets;
  {
    auto opts = rig.clientOpts();
    opts.tls.ticketSink = [&](TicketData t) { tickets.push_back(std::move(t)); };
    ClientEngine client(std::move(opts), 0);
    ServerEngine server(rig.serverOpts(), 0);
    Sim sim;
    sim.pump(client, server, 5000);
    REQUIRE(client.handshakeDone());
  }
  REQUIRE_FALSE(tickets.empty());
  REQUIRE(tickets.back().maxEarlyDataBytes == 16384);

  auto opts = rig.clientOpts();
  opts.tls.resume = tickets.back();
  opts.earlyData = {'e', 'q'};
  ClientEngine client(std::move(opts), 0);
  ServerEngine server(rig.serverOpts(), 0);

  Sim sim;
  // phase 1: client flight reaches the server
  sim.pump(client, server, 25);
  CHECK(server.readEarlyApp() == Bytes{'e', 'q'});
  REQUIRE(server.writeEarlyApp({'e', 'r'}));

  sim.pump(client, server, 5000);
  REQUIRE(client.handshakeDone());
  CHECK(client.resumed());
  CHECK(client.earlyDataAccepted());

  Bytes reply = client.readApp();
  CHECK(reply == Bytes{'e', 'r'});
}

TEST_CASE("version negotiation halts the client with the server's offer", "[quicish]")
{
  auto rig = Rig::make();
  auto opts = rig.clientOpts();
  opts.version = 0x0A0A0A0A; // unknown to the server
  ClientEngine client(std::move(opts), 0);

  auto flight = client.takeDatagrams(0);
  REQUIRE_FALSE(flight.empty());
  auto parsed = decodeDatagram(flight[0]);
  auto &p = std::get<Packet>(parsed.at(0));

  // a listener that does not speak this version answers with its own list
  Bytes vn = encodeVersionNegotiation(p.dcid, p.scid, {kVersion});
  client.onDatagram(vn, 25);
  CHECK(client.failed());
  CHECK(client.errorCode() == Errc::version_negotiation_required);
  REQUIRE(client.offeredVersions().size() == 1);
  CHECK(client.offeredVersions()[0] == kVersion);
}

TEST_CASE("lost first flight retransmits after one second", "[quicish]")
{
  auto rig = Rig::make();
  ClientEngine client(rig.clientOpts(), 0);
  ServerEngine server(rig.serverOpts(), 0);
  Sim sim;
  sim.dropFirstClientDatagram = true;
  sim.pump(client, server, 10000);

  REQUIRE(client.handshakeDone());
  CHECK(client.retransmissions() >= 1);
  CHECK(sim.now >= 1000 + 50);
  CHECK(sim.now <= 1200);
}

TEST_CASE("meter splits handshake and application bytes", "[quicish]")
{
  auto rig = Rig::make();
  ClientEngine client(rig.clientOpts(), 0);
  ServerEngine server(rig.serverOpts(), 0);
  Sim sim;
  sim.pump(client, server, 5000);
  REQUIRE(client.handshakeDone());

  const auto &m1 = client.meter();
  CHECK(m1.out.handshakeBytes >= kMinInitialDatagram);
  CHECK(m1.in.handshakeBytes > 0);
  std::uint64_t hsOut = m1.out.handshakeBytes;

  client.writeApp(Bytes(40, 1), sim.now);
  sim.pump(client, server, sim.now + 500);
  server.writeApp(Bytes(60, 2), sim.now);
  sim.pump(client, server, sim.now + 500);
  client.readApp();

  const auto &m2 = client.meter();
  CHECK(m2.out.handshakeBytes == hsOut);
  CHECK(m2.out.applicationBytes >= 40);
  CHECK(m2.in.applicationBytes >= 60);
  CHECK(m2.out.applicationPdus >= 1);
}
