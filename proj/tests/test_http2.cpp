// Copyright 2026 The doxbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "doxbench/net/http2.hpp"

using namespace doxbench;
using namespace doxbench::net::h2;

TEST_CASE("HPACK integer coding matches the published examples", "[http2]")
{
  // 10 in a 5-bit prefix -> 0x0A; 1337 -> 1F 9A 0A; 42 in 8 bits -> 2A
  Bytes out;
  hpack::encodeInt(out, 0x00, 5, 10);
  CHECK(out == Bytes{0x0A});

  out.clear();
  hpack::encodeInt(out, 0x00, 5, 1337);
  CHECK(out == Bytes{0x1F, 0x9A, 0x0A});

  out.clear();
  hpack::encodeInt(out, 0x00, 8, 42);
  CHECK(out == Bytes{0x2A});

  std::size_t pos = 0;
  CHECK(hpack::decodeInt(Bytes{0x0A}, pos, 5) == 10);
  pos = 0;
  CHECK(hpack::decodeInt(Bytes{0x1F, 0x9A, 0x0A}, pos, 5) == 1337);
  pos = 0;
  CHECK(hpack::decodeInt(Bytes{0x2A}, pos, 8) == 42);
}

TEST_CASE("HPACK integers round-trip across prefix boundaries", "[http2]")
{
  for (int prefix = 1; prefix <= 8; ++prefix)
  {
    for (std::uint64_t v : {0ULL, 1ULL, 30ULL, 31ULL, 32ULL, 127ULL, 128ULL, 255ULL, 16384ULL, 1000000ULL})
    {
      Bytes out;
      hpack::encodeInt(out, 0x00, prefix, v);
      std::size_t pos = 0;
      CHECK(hpack::decodeInt(out, pos, prefix) == v);
      CHECK(pos == out.size());
    }
  }
}

TEST_CASE("full static-table matches collapse to one byte", "[http2]")
{
  Bytes out;
  hpack::encodeHeader(out, ":method", "POST");
  CHECK(out == Bytes{0x83});

  out.clear();
  hpack::encodeHeader(out, ":status", "200");
  CHECK(out == Bytes{0x88});

  out.clear();
  hpack::encodeHeader(out, ":scheme", "https");
  CHECK(out == Bytes{0x87});
}

TEST_CASE("header blocks round-trip without a dynamic table", "[http2]")
{
  std::vector<Header> headers = {
      {":method", "POST"},
      {":scheme", "https"},
      {":authority", "127.0.0.1"},
      {":path", "/dns-query"},
      {"content-type", "application/dns-message"},
      {"content-length", "47"},
      {"x-private-thing", "hello"},
  };
  auto block = hpack::encodeBlock(headers);
  auto back = hpack::decodeBlock(block);
  REQUIRE(back.size() == headers.size());
  for (std::size_t i = 0; i < headers.size(); ++i)
  {
    CHECK(back[i].name == headers[i].name);
    CHECK(back[i].value == headers[i].value);
  }
}

TEST_CASE("decoder rejects what the pinned settings forbid", "[http2]")
{
  // Huffman-coded string
  Bytes huffman = {0x00, 0x81, 0xFF};
  CHECK_THROWS_AS(hpack::decodeBlock(huffman), DxError);

  // indexed reference beyond the static table (would need a dynamic table)
  Bytes dynamicRef = {0xBE};
  CHECK_THROWS_AS(hpack::decodeBlock(dynamicRef), DxError);

  // incremental indexing would grow a dynamic table we pinned to zero
  Bytes incremental = {0x44, 0x01, 'x'};
  CHECK_THROWS_AS(hpack::decodeBlock(incremental), DxError);

  // dynamic table resize above zero
  Bytes resize = {0x3F, 0xE1, 0x1F};
  CHECK_THROWS_AS(hpack::decodeBlock(resize), DxError);
  Bytes resizeZero = {0x20};
  CHECK_NOTHROW(hpack::decodeBlock(resizeZero));
}

TEST_CASE("frames round-trip and partial buffers wait for more", "[http2]")
{
  Frame f;
  f.type = FrameType::Headers;
  f.flags = kFlagEndHeaders | kFlagEndStream;
  f.streamId = 5;
  f.payload = {1, 2, 3, 4};

  Bytes wire = encodeFrame(f);
  CHECK(wire.size() == 13);

  Bytes partial(wire.begin(), wire.begin() + 8);
  CHECK_FALSE(takeFrame(partial).has_value());

  Bytes full = wire;
  auto back = takeFrame(full);
  REQUIRE(back.has_value());
  CHECK(back->type == FrameType::Headers);
  CHECK(back->flags == (kFlagEndHeaders | kFlagEndStream));
  CHECK(back->streamId == 5);
  CHECK(back->payload == Bytes{1, 2, 3, 4});
  CHECK(full.empty());
}

TEST_CASE("client and server complete a POST exchange", "[http2]")
{
  H2Client client;
  H2Server server;

  Bytes query = {0xAB, 0xCD, 0x01, 0x02};
  auto streamId = client.sendPost("/dns-query", "127.0.0.1", "application/dns-message", query);
  CHECK(streamId == 1);

  server.feed(client.takeOutbound());
  auto requests = server.takeRequests();
  REQUIRE(requests.size() == 1);
  CHECK(requests[0].method == "POST");
  CHECK(requests[0].path == "/dns-query");
  CHECK(requests[0].contentType == "application/dns-message");
  CHECK(requests[0].body == query);

  Response resp;
  resp.status = 200;
  resp.contentType = "application/dns-message";
  resp.body = {0xEE, 0xFF};
  server.respond(requests[0].streamId, resp);

  client.feed(server.takeOutbound());
  auto got = client.takeResponse(streamId);
  REQUIRE(got.has_value());
  CHECK(got->status == 200);
  CHECK(got->contentType == "application/dns-message");
  CHECK(got->body == Bytes{0xEE, 0xFF});

  // second request on the same connection
  auto s2 = client.sendPost("/dns-query", "127.0.0.1", "application/dns-message", {0x01});
  CHECK(s2 == 3);
  server.feed(client.takeOutbound());
  auto r2 = server.takeRequests();
  REQUIRE(r2.size() == 1);
  CHECK(r2[0].streamId == 3);
}

TEST_CASE("server rejects a bad preface with GOAWAY", "[http2]")
{
  H2Server server;
  Bytes junk(kPreface.size(), 'x');
  server.feed(junk);
  CHECK(server.failed());
  auto out = server.takeOutbound();
  // initial SETTINGS plus a GOAWAY carrying PROTOCOL_ERROR
  bool sawGoaway = false;
  Bytes buf = out;
  while (auto f = takeFrame(buf))
  {
    if (f->type == FrameType::GoAway)
    {
      sawGoaway = true;
    }
  }
  CHECK(sawGoaway);
}

TEST_CASE("empty-body POST carries END_STREAM on HEADERS", "[http2]")
{
  H2Client client;
  client.sendPost("/dns-query", "h", "application/dns-message", {});
  Bytes out = client.takeOutbound();
  out.erase(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(kPreface.size()));
  std::optional<Frame> headersFrame;
  while (auto f = takeFrame(out))
  {
    if (f->type == FrameType::Headers)
    {
      headersFrame = f;
    }
  }
  REQUIRE(headersFrame.has_value());
  CHECK((headersFrame->flags & kFlagEndStream) != 0);
}
