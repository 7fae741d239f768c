// Copyright 2026 The doxbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <vector>

#include "doxbench/tlsx/cert.hpp"
#include "doxbench/tlsx/context.hpp"
#include "doxbench/tlsx/engine.hpp"

using namespace doxbench;
using namespace doxbench::tlsx;

namespace
{

struct PumpStats
{
  std::uint64_t clientToServer = 0;
  std::uint64_t serverToClient = 0;
};

/// Shuttles ciphertext between two engines until neither makes progress.
PumpStats pump(TlsEngine &client, TlsEngine &server, int maxIters = 50)
{
  PumpStats stats;
  for (int i = 0; i < maxIters; ++i)
  {
    bool moved = false;
    Bytes c2s = client.takeOutbound();
    if (!c2s.empty())
    {
      stats.clientToServer += c2s.size();
      server.feed(c2s);
      moved = true;
    }
    if (!server.handshakeDone())
    {
      server.drive();
    }
    Bytes s2c = server.takeOutbound();
    if (!s2c.empty())
    {
      stats.serverToClient += s2c.size();
      client.feed(s2c);
      moved = true;
    }
    if (!client.handshakeDone())
    {
      client.drive();
    }
    if (!moved && i > 0)
    {
      break;
    }
  }
  return stats;
}

struct Rig
{
  CertMaterial cert;
  TlsContext serverCtx;
  TlsContext clientCtx;

  static Rig make(ServerTlsOptions sopts = {}, ClientTlsOptions copts = {}, std::size_t certPadding = 0)
  {
    CertMaterial cert = makeSelfSignedCert("mock.resolver.test", certPadding);
    sopts.certPem = cert.certPem;
    sopts.keyPem = cert.keyPem;
    if (copts.trustPem.empty())
    {
      copts.trustPem = cert.certPem;
    }
    TlsContext serverCtx = TlsContext::server(sopts);
    TlsContext clientCtx = TlsContext::client(copts);
    return Rig{std::move(cert), std::move(serverCtx), std::move(clientCtx)};
  }

  TlsEngine::ClientOptions clientOpts() const
  {
    TlsEngine::ClientOptions o;
    o.sniName = "mock.resolver.test";
    return o;
  }
};

} // namespace

TEST_CASE("fresh TLS 1.3 handshake with ALPN", "[tls]")
{
  ServerTlsOptions sopts;
  sopts.alpn = {"dot"};
  ClientTlsOptions copts;
  copts.alpn = {"dot"};
  auto rig = Rig::make(sopts, copts);

  TlsEngine client = TlsEngine::client(rig.clientCtx, rig.clientOpts());
  TlsEngine server = TlsEngine::server(rig.serverCtx);
  client.drive();
  pump(client, server);

  REQUIRE(client.handshakeDone());
  REQUIRE(server.handshakeDone());
  CHECK(client.version() == TlsVersion::v1_3);
  CHECK(server.version() == TlsVersion::v1_3);
  CHECK_FALSE(client.resumed());
  CHECK(client.alpn() == "dot");
  CHECK(server.alpn() == "dot");
}

TEST_CASE("application data flows both ways", "[tls]")
{
  auto rig = Rig::make();
  TlsEngine client = TlsEngine::client(rig.clientCtx, rig.clientOpts());
  TlsEngine server = TlsEngine::server(rig.serverCtx);
  client.drive();
  pump(client, server);
  REQUIRE(client.handshakeDone());

  client.writeApp({'p', 'i', 'n', 'g'});
  server.feed(client.takeOutbound());
  CHECK(server.readApp() == Bytes{'p', 'i', 'n', 'g'});

  server.writeApp({'p', 'o', 'n', 'g'});
  client.feed(server.takeOutbound());
  CHECK(client.readApp() == Bytes{'p', 'o', 'n', 'g'});
}

TEST_CASE("client captures session tickets with the configured lifetime", "[tls]")
{
  ServerTlsOptions sopts;
  sopts.numTickets = 2;
  sopts.ticketLifetimeSeconds = 3600;
  auto rig = Rig::make(sopts);

  std::vector<TicketData> tickets;
  auto opts = rig.clientOpts();
  opts.ticketSink = [&](TicketData t) { tickets.push_back(std::move(t)); };

  TlsEngine client = TlsEngine::client(rig.clientCtx, std::move(opts));
  TlsEngine server = TlsEngine::server(rig.serverCtx);
  client.drive();
  pump(client, server);
  REQUIRE(client.handshakeDone());
  client.readApp(); // processes post-handshake NewSessionTicket messages

  REQUIRE(tickets.size() >= 1);
  CHECK(tickets.size() <= 2);
  CHECK(tickets[0].lifetimeSeconds == 3600);
  CHECK(tickets[0].maxEarlyDataBytes == 0);
  CHECK_FALSE(tickets[0].serialized.empty());
}

TEST_CASE("ticket lifetime is capped at seven days", "[tls]")
{
  ServerTlsOptions sopts;
  sopts.ticketLifetimeSeconds = 0x7FFFFFFF;
  auto rig = Rig::make(sopts);

  std::vector<TicketData> tickets;
  auto opts = rig.clientOpts();
  opts.ticketSink = [&](TicketData t) { tickets.push_back(std::move(t)); };
  TlsEngine client = TlsEngine::client(rig.clientCtx, std::move(opts));
  TlsEngine server = TlsEngine::server(rig.serverCtx);
  client.drive();
  pump(client, server);
  client.readApp();

  REQUIRE_FALSE(tickets.empty());
  CHECK(tickets[0].lifetimeSeconds == kMaxTicketLifetimeSeconds);
}

TEST_CASE("ticket disablement yields no tickets", "[tls]")
{
  ServerTlsOptions sopts;
  sopts.numTickets = 0;
  auto rig = Rig::make(sopts);

  std::vector<TicketData> tickets;
  auto opts = rig.clientOpts();
  opts.ticketSink = [&](TicketData t) { tickets.push_back(std::move(t)); };
  TlsEngine client = TlsEngine::client(rig.clientCtx, std::move(opts));
  TlsEngine server = TlsEngine::server(rig.serverCtx);
  client.drive();
  pump(client, server);
  client.readApp();
  CHECK(tickets.empty());
}

TEST_CASE("session resumption", "[tls]")
{
  auto rig = Rig::make();

  std::vector<TicketData> tickets;
  auto opts = rig.clientOpts();
  opts.ticketSink = [&](TicketData t) { tickets.push_back(std::move(t)); };
  {
    TlsEngine client = TlsEngine::client(rig.clientCtx, std::move(opts));
    TlsEngine server = TlsEngine::server(rig.serverCtx);
    client.drive();
    pump(client, server);
    client.readApp();
  }
  REQUIRE_FALSE(tickets.empty());

  auto opts2 = rig.clientOpts();
  opts2.resume = tickets.back();
  TlsEngine client2 = TlsEngine::client(rig.clientCtx, std::move(opts2));
  TlsEngine server2 = TlsEngine::server(rig.serverCtx);
  client2.drive();
  auto stats = pump(client2, server2);
  REQUIRE(client2.handshakeDone());
  CHECK(client2.resumed());
  CHECK(server2.resumed());
  CHECK(stats.serverToClient > 0);
}

TEST_CASE("0-RTT round trip with an early server reply", "[tls]")
{
  ServerTlsOptions sopts;
  sopts.maxEarlyDataBytes = 16384;
  auto rig = Rig::make(sopts);

  std::vector<TicketData> tickets;
  auto opts = rig.clientOpts();
  opts.ticketSink = [&](TicketData t) { tickets.push_back(std::move(t)); };
  {
    TlsEngine client = TlsEngine::client(rig.clientCtx, std::move(opts));
    TlsEngine server = TlsEngine::server(rig.serverCtx);
    client.drive();
    pump(client, server);
    client.readApp();
  }
  REQUIRE_FALSE(tickets.empty());
  REQUIRE(tickets.back().maxEarlyDataBytes == 16384);

  auto opts2 = rig.clientOpts();
  opts2.resume = tickets.back();
  TlsEngine client2 = TlsEngine::client(rig.clientCtx, std::move(opts2));
  TlsEngine server2 = TlsEngine::server(rig.serverCtx);

  Bytes earlyQuery = {'e', 'a', 'r', 'l', 'y'};
  REQUIRE(client2.tryWriteEarly(earlyQuery));

  // client first flight carries the early data
  Bytes flight1 = client2.takeOutbound();
  REQUIRE_FALSE(flight1.empty());
  server2.feed(flight1);
  server2.drive();
  CHECK(server2.takeEarlyApp() == earlyQuery);

  // server replies before its handshake completes
  REQUIRE(server2.tryWriteEarly({'r', 'e', 'p', 'l', 'y'}));
  pump(client2, server2);
  REQUIRE(client2.handshakeDone());
  CHECK(client2.earlyDataAccepted());
  CHECK(server2.earlyDataAccepted());
  CHECK(client2.readApp() == Bytes{'r', 'e', 'p', 'l', 'y'});
}

TEST_CASE("early data offered to a server that disabled it is rejected", "[tls]")
{
  // first rig issues early-data-capable tickets
  ServerTlsOptions sopts;
  sopts.maxEarlyDataBytes = 16384;
  auto rig = Rig::make(sopts);

  std::vector<TicketData> tickets;
  auto opts = rig.clientOpts();
  opts.ticketSink = [&](TicketData t) { tickets.push_back(std::move(t)); };
  {
    TlsEngine client = TlsEngine::client(rig.clientCtx, std::move(opts));
    TlsEngine server = TlsEngine::server(rig.serverCtx);
    client.drive();
    pump(client, server);
    client.readApp();
  }
  REQUIRE_FALSE(tickets.empty());

  // same certificate, early data now disabled
  ServerTlsOptions fresh;
  fresh.certPem = rig.cert.certPem;
  fresh.keyPem = rig.cert.keyPem;
  TlsContext strictCtx = TlsContext::server(fresh);

  auto opts2 = rig.clientOpts();
  opts2.resume = tickets.back();
  TlsEngine client2 = TlsEngine::client(rig.clientCtx, std::move(opts2));
  TlsEngine server2 = TlsEngine::server(strictCtx);
  client2.tryWriteEarly({'e'});
  pump(client2, server2);
  REQUIRE(client2.handshakeDone());
  CHECK_FALSE(client2.earlyDataAccepted());
}

TEST_CASE("TLS 1.2 cap negotiates the older version", "[tls]")
{
  ServerTlsOptions sopts;
  sopts.forceTls12 = true;
  auto rig = Rig::make(sopts);
  TlsEngine client = TlsEngine::client(rig.clientCtx, rig.clientOpts());
  TlsEngine server = TlsEngine::server(rig.serverCtx);
  client.drive();
  pump(client, server);
  REQUIRE(client.handshakeDone());
  CHECK(client.version() == TlsVersion::v1_2);
  CHECK(server.version() == TlsVersion::v1_2);
}

TEST_CASE("ALPN mismatch fails the handshake with its own error code", "[tls]")
{
  ServerTlsOptions sopts;
  sopts.alpn = {"doq"};
  sopts.requireAlpn = true;
  ClientTlsOptions copts;
  copts.alpn = {"h2"};
  auto rig = Rig::make(sopts, copts);

  TlsEngine client = TlsEngine::client(rig.clientCtx, rig.clientOpts());
  TlsEngine server = TlsEngine::server(rig.serverCtx);
  client.drive();
  pump(client, server);
  CHECK_FALSE(client.handshakeDone());
  bool clientSaw = client.failureCode() == Errc::alpn_mismatch && !client.lastError().empty();
  CHECK(clientSaw);
}

TEST_CASE("untrusted certificate fails verification", "[tls]")
{
  CertMaterial other = makeSelfSignedCert("other.test");
  ServerTlsOptions sopts;
  ClientTlsOptions copts;
  copts.trustPem = other.certPem; // trust anchor does not match the server
  auto rig = Rig::make(sopts, copts);

  TlsEngine client = TlsEngine::client(rig.clientCtx, rig.clientOpts());
  TlsEngine server = TlsEngine::server(rig.serverCtx);
  client.drive();
  pump(client, server);
  CHECK_FALSE(client.handshakeDone());
  CHECK(client.failureCode() == Errc::tls_failure);
}

TEST_CASE("certificate is valid for the loopback IP", "[tls]")
{
  auto rig = Rig::make();
  auto opts = rig.clientOpts();
  opts.sniName.clear();
  opts.verifyIp = "127.0.0.1";
  TlsEngine client = TlsEngine::client(rig.clientCtx, std::move(opts));
  TlsEngine server = TlsEngine::server(rig.serverCtx);
  client.drive();
  pump(client, server);
  CHECK(client.handshakeDone());
}

TEST_CASE("certificate padding inflates the server's first flight", "[tls]")
{
  auto small = Rig::make({}, {}, 0);
  auto big = Rig::make({}, {}, 4000);
  CHECK(big.cert.certDerBytes >= small.cert.certDerBytes + 3500);

  auto run = [](Rig &rig) {
    TlsEngine client = TlsEngine::client(rig.clientCtx, rig.clientOpts());
    TlsEngine server = TlsEngine::server(rig.serverCtx);
    client.drive();
    return pump(client, server);
  };
  auto smallStats = run(small);
  auto bigStats = run(big);
  CHECK(bigStats.serverToClient >= smallStats.serverToClient + 3500);
}
