// Copyright 2026 The doxbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "doxbench/dns/codec.hpp"
#include "support/reference_dns.hpp"

using namespace doxbench;
using namespace doxbench::dns;

namespace
{

DnsQuery plainQuery(std::uint16_t id, const std::string &name)
{
  DnsQuery q;
  q.id = id;
  q.qname = name;
  q.qtype = RType::A;
  q.recursionDesired = true;
  q.ednsUdpSize.reset();
  return q;
}

Bytes toBytes(const refdns::Buf &b)
{
  return Bytes(b.begin(), b.end());
}

} // namespace

TEST_CASE("encode_query matches the independent reference encoder", "[codec]")
{
  auto mine = encodeQuery(plainQuery(0x1234, "google.com"));
  auto ref = refdns::query(0x1234, "google.com", 1, true);

  // header(12) + qname(12) + type(2) + class(2)
  REQUIRE(mine.size() == 28);
  CHECK(toBytes(ref) == mine);
}

TEST_CASE("encode_query of the root name is 17 bytes", "[codec]")
{
  auto mine = encodeQuery(plainQuery(7, ""));
  REQUIRE(mine.size() == 17);
  CHECK(toBytes(refdns::query(7, "", 1, true)) == mine);

  // "." is the same root name
  CHECK(encodeQuery(plainQuery(7, ".")) == mine);
}

TEST_CASE("encode_query rejects invalid names", "[codec]")
{
  DnsQuery q = plainQuery(1, std::string(64, 'a') + ".com");
  CHECK_THROWS_MATCHES(encodeQuery(q), DxError, Catch::Matchers::Predicate<DxError>([](const DxError &e) {
                         return e.code() == Errc::invalid_name;
                       }));

  // 255-octet total limit: four 63-octet labels put the wire form at 257.
  std::string longLabel(63, 'x');
  q.qname = longLabel + "." + longLabel + "." + longLabel + "." + longLabel;
  CHECK_THROWS_AS(encodeQuery(q), DxError);

  q.qname = "a..b";
  CHECK_THROWS_AS(encodeQuery(q), DxError);
}

TEST_CASE("encode_query EDNS OPT adds 11 bytes and is off when absent", "[codec]")
{
  DnsQuery q = plainQuery(0x1234, "google.com");
  auto bare = encodeQuery(q);
  q.ednsUdpSize = kDefaultEdnsUdpSize;
  auto withOpt = encodeQuery(q);
  REQUIRE(withOpt.size() == bare.size() + 11);
  // ARCOUNT flips from 0 to 1
  CHECK(bare[11] == 0);
  CHECK(withOpt[11] == 1);
  // advertised size sits right after the root-name and OPT type octets
  std::size_t optOff = bare.size();
  CHECK(withOpt[optOff] == 0);
  CHECK(withOpt[optOff + 1] == 0);
  CHECK(withOpt[optOff + 2] == 41);
  CHECK((withOpt[optOff + 3] << 8 | withOpt[optOff + 4]) == 1232);
}

TEST_CASE("decode_response on an encoded query yields id and no answers", "[codec]")
{
  DnsQuery q = plainQuery(0xBEEF, "example.org");
  auto summary = decodeResponse(encodeQuery(q));
  CHECK(summary.id == 0xBEEF);
  CHECK(summary.answers.empty());
  CHECK(summary.rcode == 0);
  CHECK_FALSE(summary.truncated);
}

TEST_CASE("decode_response parses an A answer built by the reference encoder", "[codec]")
{
  auto wire = refdns::response(0x42, "google.com", 1, 0,
                               {{"google.com", 1, 300, refdns::ipv4(93, 184, 216, 34), false}});
  auto summary = decodeResponse(toBytes(wire));
  REQUIRE(summary.answers.size() == 1);
  CHECK(summary.answers[0].name == "google.com");
  CHECK(summary.answers[0].type == 1);
  CHECK(summary.answers[0].ttlSeconds == 300);
  CHECK(summary.answers[0].rdata == Bytes{93, 184, 216, 34});
}

TEST_CASE("decode_response follows compression pointers", "[codec]")
{
  auto wire = refdns::response(0x42, "google.com", 1, 0,
                               {{"", 1, 60, refdns::ipv4(1, 2, 3, 4), true}});
  auto summary = decodeResponse(toBytes(wire));
  REQUIRE(summary.answers.size() == 1);
  CHECK(summary.answers[0].name == "google.com");
}

TEST_CASE("decode_response rejects short and malformed input", "[codec]")
{
  Bytes tooShort(11, 0);
  CHECK_THROWS_MATCHES(decodeResponse(tooShort), DxError,
                       Catch::Matchers::Predicate<DxError>([](const DxError &e) {
                         return e.code() == Errc::truncated_input;
                       }));

  // self-referencing pointer: loop
  auto wire = refdns::response(1, "a.example", 1, 0, {});
  wire[7] = 1; // claim one answer
  std::size_t ansOff = wire.size();
  wire.push_back(0xC0);
  wire.push_back(static_cast<std::uint8_t>(ansOff)); // points at itself
  CHECK_THROWS_MATCHES(decodeResponse(toBytes(wire)), DxError,
                       Catch::Matchers::Predicate<DxError>([](const DxError &e) {
                         return e.code() == Errc::malformed_compression_pointer;
                       }));

  // forward/out-of-range pointer
  auto wire2 = refdns::response(1, "a.example", 1, 0, {});
  wire2[7] = 1;
  wire2.push_back(0xC3);
  wire2.push_back(0xFF);
  CHECK_THROWS_AS(decodeResponse(toBytes(wire2)), DxError);
}

TEST_CASE("frame/unframe round-trips and composes", "[codec]")
{
  CHECK(frame({}) == Bytes{0x00, 0x00});

  auto q = encodeQuery(plainQuery(0x1234, "google.com"));
  auto framed = frame(q);
  REQUIRE(framed.size() == 30);
  CHECK(framed[0] == 0x00);
  CHECK(framed[1] == 0x1C);

  Bytes p2 = {0xAA, 0xBB};
  Bytes joined = framed;
  auto f2 = frame(p2);
  joined.insert(joined.end(), f2.begin(), f2.end());
  auto [payload, rest] = unframe(joined);
  CHECK(payload == q);
  CHECK(rest == f2);
  auto [payload2, rest2] = unframe(rest);
  CHECK(payload2 == p2);
  CHECK(rest2.empty());
}

TEST_CASE("unframe reports incomplete frames", "[codec]")
{
  CHECK_THROWS_MATCHES(unframe(Bytes{0x00}), DxError,
                       Catch::Matchers::Predicate<DxError>([](const DxError &e) {
                         return e.code() == Errc::incomplete_frame;
                       }));
  CHECK_THROWS_AS(unframe(Bytes{0x00, 0x05, 0x01}), DxError);
  CHECK_FALSE(hasCompleteFrame(Bytes{0x00, 0x05, 0x01}));
  CHECK(hasCompleteFrame(Bytes{0x00, 0x01, 0x01}));
}

TEST_CASE("frame rejects oversize payloads", "[codec]")
{
  Bytes big(65536, 0);
  CHECK_THROWS_MATCHES(frame(big), DxError, Catch::Matchers::Predicate<DxError>([](const DxError &e) {
                         return e.code() == Errc::oversize_payload;
                       }));
  Bytes maxOk(65535, 0);
  CHECK_NOTHROW(frame(maxOk));
}

TEST_CASE("properties: framing inverts, ids round-trip, encoding deterministic", "[codec]")
{
  std::mt19937 rng(20260823);
  std::uniform_int_distribution<int> lenDist(0, 2000);
  std::uniform_int_distribution<int> byteDist(0, 255);
  std::uniform_int_distribution<int> labelLen(1, 12);
  std::uniform_int_distribution<int> labelCount(0, 5);

  for (int iter = 0; iter < 200; ++iter)
  {
    Bytes p(static_cast<std::size_t>(lenDist(rng)));
    for (auto &b : p)
    {
      b = static_cast<std::uint8_t>(byteDist(rng));
    }
    auto [payload, rest] = unframe(frame(p));
    REQUIRE(payload == p);
    REQUIRE(rest.empty());
  }

  for (int iter = 0; iter < 200; ++iter)
  {
    DnsQuery q;
    q.id = static_cast<std::uint16_t>(rng());
    std::string name;
    int labels = labelCount(rng);
    for (int i = 0; i < labels; ++i)
    {
      if (i > 0)
      {
        name.push_back('.');
      }
      int len = labelLen(rng);
      for (int j = 0; j < len; ++j)
      {
        name.push_back(static_cast<char>('a' + byteDist(rng) % 26));
      }
    }
    q.qname = name;
    q.recursionDesired = (rng() & 1) != 0;
    if ((rng() & 1) != 0)
    {
      q.ednsUdpSize.reset();
    }
    auto once = encodeQuery(q);
    auto twice = encodeQuery(q);
    REQUIRE(once == twice);
    REQUIRE(decodeResponse(once).id == q.id);
  }
}

TEST_CASE("encodeResponse matches the reference responder byte for byte", "[codec]")
{
  // Oracle first: the naive encoder fixes the expected wire image.
  refdns::RefAnswer ra;
  ra.name = "google.com";
  ra.type = 1;
  ra.ttl = 300;
  ra.rdata = refdns::ipv4(142, 250, 185, 78);
  refdns::Buf expected = refdns::response(0x4242, "google.com", 1, 0, {ra});

  DnsResponseSpec spec;
  spec.id = 0x4242;
  spec.qname = "google.com";
  spec.qtype = RType::A;
  spec.recursionDesired = true;
  spec.rcode = RCode::NOERROR;
  spec.answers.push_back({"google.com", RType::A, 300, aRdata("142.250.185.78")});

  Bytes got = encodeResponse(spec);
  REQUIRE(got == Bytes(expected.begin(), expected.end()));
}

TEST_CASE("encodeResponse NXDOMAIN carries no answers and rcode 3", "[codec]")
{
  refdns::Buf expected = refdns::response(7, "nope.invalid", 1, 3, {});

  DnsResponseSpec spec;
  spec.id = 7;
  spec.qname = "nope.invalid";
  spec.rcode = RCode::NXDOMAIN;
  Bytes got = encodeResponse(spec);
  REQUIRE(got == Bytes(expected.begin(), expected.end()));

  auto summary = decodeResponse(got);
  CHECK(summary.rcode == 3);
  CHECK(summary.answers.empty());
}

TEST_CASE("decodeQuery reads back what encodeQuery wrote", "[codec]")
{
  DnsQuery q;
  q.id = 0xBEEF;
  q.qname = "example.org";
  q.qtype = RType::AAAA;
  q.recursionDesired = true;
  q.ednsUdpSize.reset();

  auto view = decodeQuery(encodeQuery(q));
  CHECK(view.id == 0xBEEF);
  CHECK(view.qname == "example.org");
  CHECK(view.qtype == RType::AAAA);
  CHECK(view.qclass == 1);
  CHECK(view.recursionDesired);
}

TEST_CASE("decodeQuery rejects responses and junk", "[codec]")
{
  // a response has QR set; feeding it to the server path must fail loudly
  Bytes resp = encodeResponse({1, "a.example", RType::A, true, RCode::NOERROR, {}});
  CHECK_THROWS_AS(decodeQuery(resp), DxError);
  CHECK_THROWS_AS(decodeQuery(Bytes{0, 1, 2}), DxError);

  DnsQuery q;
  q.qname = "x.example";
  Bytes noQuestion = encodeQuery(q);
  noQuestion[5] = 0; // QDCOUNT -> 0
  CHECK_THROWS_AS(decodeQuery(noQuestion), DxError);
}

TEST_CASE("aRdata packs dotted quads and rejects malformed ones", "[codec]")
{
  CHECK(aRdata("8.8.8.8") == Bytes{8, 8, 8, 8});
  CHECK(aRdata("255.0.1.2") == Bytes{255, 0, 1, 2});
  CHECK_THROWS_AS(aRdata("1.2.3"), DxError);
  CHECK_THROWS_AS(aRdata("1.2.3.4.5"), DxError);
  CHECK_THROWS_AS(aRdata("256.1.1.1"), DxError);
  CHECK_THROWS_AS(aRdata("a.b.c.d"), DxError);
}
