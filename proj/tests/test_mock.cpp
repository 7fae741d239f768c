// Copyright 2026 The doxbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <cmath>
#include <thread>

#include "doxbench/mock/mock_resolver.hpp"
#include "doxbench/transport/client.hpp"

using namespace doxbench;

namespace
{

dns::DnsQuery queryFor(const std::string &name, std::uint16_t id = 0x42)
{
  dns::DnsQuery q;
  q.id = id;
  q.qname = name;
  return q;
}

transport::Timeouts shortTimeouts()
{
  transport::Timeouts to;
  to.connectMs = 1500;
  to.handshakeMs = 1500;
  to.resolveMs = 1500;
  to.totalMs = 3000;
  return to;
}

} // namespace

TEST_CASE("the configured one-way delay reproduces as the observed round trip", "[mock]")
{
  mock::MockConfig cfg;
  cfg.zone = {{"probe.test", {"192.0.2.10"}}};
  cfg.oneWayDelayMs = 40;
  mock::MockResolver resolver(std::move(cfg));

  transport::Target t;
  t.ip = resolver.host();
  t.port = resolver.port(ProtocolKind::DoUDP);
  auto o = transport::doudpQuery(t, queryFor("probe.test"), shortTimeouts());
  REQUIRE(o.ok());
  CHECK(std::fabs(o.timing.resolveMs - 80.0) <= 10.0);
}

TEST_CASE("query counters track every protocol", "[mock]")
{
  mock::MockConfig cfg;
  cfg.zone = {{"counted.test", {"192.0.2.11"}}};
  mock::MockResolver resolver(std::move(cfg));
  SessionStore store;

  transport::Target t;
  t.ip = resolver.host();
  t.sni = "mock.test";
  t.trustPem = resolver.certPem();

  for (ProtocolKind p : kAllProtocols)
  {
    t.port = resolver.port(p);
    auto o = transport::query(p, t, queryFor("counted.test"), store, shortTimeouts());
    INFO(protocolName(p));
    REQUIRE(o.ok());
  }
  CHECK(resolver.counters().queriesAnswered == 5);
  CHECK(resolver.counters().connectionsAccepted >= 3); // one per stream protocol
  CHECK(resolver.counters().ticketsIssued > 0);
  CHECK(resolver.counters().datagramsReceived > 0);
}

TEST_CASE("a name outside the zone is NXDOMAIN, a wrong type is a clean NODATA", "[mock]")
{
  mock::MockConfig cfg;
  cfg.zone = {{"present.test", {"192.0.2.12"}}};
  mock::MockResolver resolver(std::move(cfg));

  transport::Target t;
  t.ip = resolver.host();
  t.port = resolver.port(ProtocolKind::DoUDP);

  auto missing = transport::doudpQuery(t, queryFor("absent.test"), shortTimeouts());
  REQUIRE(missing.ok());
  CHECK(missing.rcode == 3);
  CHECK(missing.bytes.responseBytes > 0);

  dns::DnsQuery aaaa = queryFor("present.test");
  aaaa.qtype = 28; // AAAA: name exists, no record of that type
  auto nodata = transport::doudpQuery(t, aaaa, shortTimeouts());
  REQUIRE(nodata.ok());
  CHECK(nodata.rcode == 0);
}

TEST_CASE("zone lookups ignore case and a trailing dot", "[mock]")
{
  mock::MockConfig cfg;
  cfg.zone = {{"MiXeD.Test.", {"192.0.2.13"}}};
  mock::MockResolver resolver(std::move(cfg));

  transport::Target t;
  t.ip = resolver.host();
  t.port = resolver.port(ProtocolKind::DoUDP);
  auto o = transport::doudpQuery(t, queryFor("mixed.test"), shortTimeouts());
  REQUIRE(o.ok());
  CHECK(o.rcode == 0);

  auto upper = transport::doudpQuery(t, queryFor("MIXED.TEST"), shortTimeouts());
  REQUIRE(upper.ok());
  CHECK(upper.rcode == 0);
}

TEST_CASE("disabled protocols do not listen", "[mock]")
{
  mock::MockConfig cfg;
  cfg.zone = {{"only-udp.test", {"192.0.2.14"}}};
  cfg.enabledProtocols = {ProtocolKind::DoUDP};
  cfg.emuEndpoints = false;
  mock::MockResolver resolver(std::move(cfg));

  CHECK(resolver.port(ProtocolKind::DoUDP) != 0);
  CHECK(resolver.port(ProtocolKind::DoT) == 0);
  CHECK(resolver.port(ProtocolKind::DoQ) == 0);
}

TEST_CASE("probabilistic inbound drop loses DoUDP queries", "[mock]")
{
  mock::MockConfig cfg;
  cfg.zone = {{"lossy.test", {"192.0.2.15"}}};
  cfg.doudpDrop.inboundProbability = 1.0;
  mock::MockResolver resolver(std::move(cfg));

  transport::Target t;
  t.ip = resolver.host();
  t.port = resolver.port(ProtocolKind::DoUDP);
  transport::Timeouts to = shortTimeouts();
  transport::RetransmitPolicy retry;
  retry.initialTimeoutMs = 120;
  auto o = transport::doudpQuery(t, queryFor("lossy.test"), to, retry);
  REQUIRE_FALSE(o.ok());
  CHECK(o.error == Errc::timeout);
  CHECK(resolver.counters().queriesAnswered == 0);
  CHECK(resolver.counters().droppedDatagrams >= 1);
}

TEST_CASE("ticket lifetimes above the protocol ceiling are rejected", "[mock]")
{
  mock::MockConfig cfg;
  cfg.zone = {{"x.test", {"192.0.2.16"}}};
  cfg.ticketLifetimeS = tlsx::kMaxTicketLifetimeSeconds + 1;
  CHECK_THROWS_AS(mock::MockResolver(std::move(cfg)), DxError);
}

TEST_CASE("short ticket lifetimes expire in the client store", "[mock]")
{
  // The resolver hands out a 1-second ticket; once it lapses the client
  // must fall back to a full handshake instead of presenting it.
  mock::MockConfig cfg;
  cfg.zone = {{"shortticket.test", {"192.0.2.17"}}};
  cfg.ticketLifetimeS = 1;
  mock::MockResolver resolver(std::move(cfg));
  SessionStore store;

  transport::Target t;
  t.ip = resolver.host();
  t.port = resolver.port(ProtocolKind::DoT);
  t.sni = "mock.test";
  t.trustPem = resolver.certPem();

  auto first = transport::dotQuery(t, queryFor("shortticket.test"), store, shortTimeouts());
  REQUIRE(first.ok());
  ResolverKey key{t.ip, t.port, ProtocolKind::DoT};
  REQUIRE(store.hasLiveTicket(key));

  std::this_thread::sleep_for(std::chrono::milliseconds(2100));
  CHECK_FALSE(store.hasLiveTicket(key));

  auto second = transport::dotQuery(t, queryFor("shortticket.test"), store, shortTimeouts());
  REQUIRE(second.ok());
  CHECK_FALSE(second.resumed);
}
