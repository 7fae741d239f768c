// Copyright 2026 The doxbench Authors
// SPDX-License-Identifier: Apache-2.0

/// \file http2.hpp
/// \brief The HTTP/2 subset DoH needs: one connection, POST request and
/// response with small header blocks and bodies.
///
/// HPACK is restricted to the static table. Both sides advertise
/// SETTINGS_HEADER_TABLE_SIZE = 0, which forbids the peer from adding
/// dynamic-table entries, so indexed references beyond the static range and
/// Huffman-coded strings are protocol errors here. That keeps header sizes
/// deterministic, which the byte accounting relies on.

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "doxbench/bytes.hpp"
#include "doxbench/common.hpp"

namespace doxbench::net::h2
{

inline constexpr std::string_view kPreface = "PRI * HTTP/2.0\r\n\r\nSM\r\n\r\n";

enum class FrameType : std::uint8_t
{
  Data = 0x0,
  Headers = 0x1,
  Priority = 0x2,
  RstStream = 0x3,
  Settings = 0x4,
  PushPromise = 0x5,
  Ping = 0x6,
  GoAway = 0x7,
  WindowUpdate = 0x8,
  Continuation = 0x9,
};

constexpr std::uint8_t kFlagEndStream = 0x1;
constexpr std::uint8_t kFlagAck = 0x1;
constexpr std::uint8_t kFlagEndHeaders = 0x4;

constexpr std::uint16_t kSettingsHeaderTableSize = 0x1;
constexpr std::uint16_t kSettingsEnablePush = 0x2;
constexpr std::uint16_t kSettingsMaxConcurrentStreams = 0x3;

struct Frame
{
  FrameType type = FrameType::Data;
  std::uint8_t flags = 0;
  std::uint32_t streamId = 0;
  Bytes payload;
};

struct Header
{
  std::string name;
  std::string value;
};

namespace hpack
{

inline constexpr std::array<std::pair<std::string_view, std::string_view>, 61> kStaticTable = {{
    {":authority", ""},
    {":method", "GET"},
    {":method", "POST"},
    {":path", "/"},
    {":path", "/index.html"},
    {":scheme", "http"},
    {":scheme", "https"},
    {":status", "200"},
    {":status", "204"},
    {":status", "206"},
    {":status", "304"},
    {":status", "400"},
    {":status", "404"},
    {":status", "500"},
    {"accept-charset", ""},
    {"accept-encoding", "gzip, deflate"},
    {"accept-language", ""},
    {"accept-ranges", ""},
    {"accept", ""},
    {"access-control-allow-origin", ""},
    {"age", ""},
    {"allow", ""},
    {"authorization", ""},
    {"cache-control", ""},
    {"content-disposition", ""},
    {"content-encoding", ""},
    {"content-language", ""},
    {"content-length", ""},
    {"content-location", ""},
    {"content-range", ""},
    {"content-type", ""},
    {"cookie", ""},
    {"date", ""},
    {"etag", ""},
    {"expect", ""},
    {"expires", ""},
    {"from", ""},
    {"host", ""},
    {"if-match", ""},
    {"if-modified-since", ""},
    {"if-none-match", ""},
    {"if-range", ""},
    {"if-unmodified-since", ""},
    {"last-modified", ""},
    {"link", ""},
    {"location", ""},
    {"max-forwards", ""},
    {"proxy-authenticate", ""},
    {"proxy-authorization", ""},
    {"range", ""},
    {"referer", ""},
    {"refresh", ""},
    {"retry-after", ""},
    {"server", ""},
    {"set-cookie", ""},
    {"strict-transport-security", ""},
    {"transfer-encoding", ""},
    {"user-agent", ""},
    {"vary", ""},
    {"via", ""},
    {"www-authenticate", ""},
}};

inline void encodeInt(Bytes &out, std::uint8_t firstByteFlags, int prefixBits, std::uint64_t value)
{
  std::uint64_t maxPrefix = (1ULL << prefixBits) - 1;
  if (value < maxPrefix)
  {
    out.push_back(static_cast<std::uint8_t>(firstByteFlags | value));
    return;
  }
  out.push_back(static_cast<std::uint8_t>(firstByteFlags | maxPrefix));
  value -= maxPrefix;
  while (value >= 128)
  {
    out.push_back(static_cast<std::uint8_t>(0x80 | (value & 0x7F)));
    value >>= 7;
  }
  out.push_back(static_cast<std::uint8_t>(value));
}

inline std::uint64_t decodeInt(const Bytes &in, std::size_t &pos, int prefixBits)
{
  if (pos >= in.size())
  {
    throw DxError(Errc::malformed_response, "HPACK: truncated integer");
  }
  std::uint64_t maxPrefix = (1ULL << prefixBits) - 1;
  std::uint64_t value = in[pos] & maxPrefix;
  pos += 1;
  if (value < maxPrefix)
  {
    return value;
  }
  int shift = 0;
  for (;;)
  {
    if (pos >= in.size() || shift > 56)
    {
      throw DxError(Errc::malformed_response, "HPACK: bad integer continuation");
    }
    std::uint8_t b = in[pos];
    pos += 1;
    value += static_cast<std::uint64_t>(b & 0x7F) << shift;
    shift += 7;
    if ((b & 0x80) == 0)
    {
      return value;
    }
  }
}

inline void encodeString(Bytes &out, std::string_view s)
{
  encodeInt(out, 0x00, 7, s.size()); // H bit clear: raw octets
  out.insert(out.end(), s.begin(), s.end());
}

inline std::string decodeString(const Bytes &in, std::size_t &pos)
{
  if (pos >= in.size())
  {
    throw DxError(Errc::malformed_response, "HPACK: truncated string");
  }
  bool huffman = (in[pos] & 0x80) != 0;
  std::uint64_t len = decodeInt(in, pos, 7);
  if (huffman)
  {
    throw DxError(Errc::malformed_response, "HPACK: Huffman coding not supported here");
  }
  if (pos + len > in.size())
  {
    throw DxError(Errc::malformed_response, "HPACK: string overruns block");
  }
  std::string s(reinterpret_cast<const char *>(in.data() + pos), len);
  pos += len;
  return s;
}

/// Emits a header as a full static-table index, an indexed-name literal, or
/// a plain literal, never touching the dynamic table.
inline void encodeHeader(Bytes &out, std::string_view name, std::string_view value)
{
  for (std::size_t i = 0; i < kStaticTable.size(); ++i)
  {
    if (kStaticTable[i].first == name && kStaticTable[i].second == value)
    {
      encodeInt(out, 0x80, 7, i + 1);
      return;
    }
  }
  for (std::size_t i = 0; i < kStaticTable.size(); ++i)
  {
    if (kStaticTable[i].first == name)
    {
      encodeInt(out, 0x00, 4, i + 1); // literal without indexing, indexed name
      encodeString(out, value);
      return;
    }
  }
  encodeInt(out, 0x00, 4, 0);
  encodeString(out, name);
  encodeString(out, value);
}

inline Bytes encodeBlock(const std::vector<Header> &headers)
{
  Bytes out;
  for (const auto &h : headers)
  {
    encodeHeader(out, h.name, h.value);
  }
  return out;
}

inline std::vector<Header> decodeBlock(const Bytes &block)
{
  std::vector<Header> out;
  std::size_t pos = 0;
  while (pos < block.size())
  {
    std::uint8_t b = block[pos];
    if ((b & 0x80) != 0)
    {
      std::uint64_t index = decodeInt(block, pos, 7);
      if (index == 0 || index > kStaticTable.size())
      {
        throw DxError(Errc::malformed_response, "HPACK: index outside the static table");
      }
      out.push_back({std::string(kStaticTable[index - 1].first), std::string(kStaticTable[index - 1].second)});
      continue;
    }
    if ((b & 0xE0) == 0x20)
    {
      // dynamic table size update; we pinned the size to zero
      std::uint64_t size = decodeInt(block, pos, 5);
      if (size != 0)
      {
        throw DxError(Errc::malformed_response, "HPACK: dynamic table resize above zero");
      }
      continue;
    }
    int prefix = ((b & 0x40) != 0) ? 6 : 4;
    std::uint64_t nameIndex = decodeInt(block, pos, prefix);
    if ((b & 0x40) != 0)
    {
      throw DxError(Errc::malformed_response, "HPACK: incremental indexing needs a dynamic table");
    }
    Header h;
    if (nameIndex == 0)
    {
      h.name = decodeString(block, pos);
    }
    else if (nameIndex <= kStaticTable.size())
    {
      h.name = std::string(kStaticTable[nameIndex - 1].first);
    }
    else
    {
      throw DxError(Errc::malformed_response, "HPACK: name index outside the static table");
    }
    h.value = decodeString(block, pos);
    out.push_back(std::move(h));
  }
  return out;
}

} // namespace hpack

inline Bytes encodeFrame(const Frame &f)
{
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>((f.payload.size() >> 16) & 0xFF));
  w.u8(static_cast<std::uint8_t>((f.payload.size() >> 8) & 0xFF));
  w.u8(static_cast<std::uint8_t>(f.payload.size() & 0xFF));
  w.u8(static_cast<std::uint8_t>(f.type));
  w.u8(f.flags);
  w.u32(f.streamId & 0x7FFFFFFF);
  w.raw(f.payload);
  return w.take();
}

/// Parses one frame from the front of `buf`, consuming it. Returns nullopt
/// when the buffer does not yet hold a complete frame.
inline std::optional<Frame> takeFrame(Bytes &buf)
{
  if (buf.size() < 9)
  {
    return std::nullopt;
  }
  std::size_t len = static_cast<std::size_t>(buf[0]) << 16 | static_cast<std::size_t>(buf[1]) << 8 | buf[2];
  if (buf.size() < 9 + len)
  {
    return std::nullopt;
  }
  Frame f;
  f.type = static_cast<FrameType>(buf[3]);
  f.flags = buf[4];
  f.streamId = (static_cast<std::uint32_t>(buf[5]) << 24 | static_cast<std::uint32_t>(buf[6]) << 16 |
                static_cast<std::uint32_t>(buf[7]) << 8 | buf[8]) &
               0x7FFFFFFF;
  f.payload.assign(buf.begin() + 9, buf.begin() + 9 + static_cast<std::ptrdiff_t>(len));
  buf.erase(buf.begin(), buf.begin() + 9 + static_cast<std::ptrdiff_t>(len));
  return f;
}

inline Bytes settingsPayload(const std::vector<std::pair<std::uint16_t, std::uint32_t>> &settings)
{
  ByteWriter w;
  for (auto [id, value] : settings)
  {
    w.u16(id);
    w.u32(value);
  }
  return w.take();
}

struct Request
{
  std::uint32_t streamId = 0;
  std::string method;
  std::string path;
  std::string authority;
  std::string contentType;
  Bytes body;
};

struct Response
{
  int status = 0;
  std::string contentType;
  Bytes body;
};

namespace detail
{

struct StreamAccum
{
  std::vector<Header> headers;
  Bytes body;
  bool endStream = false;
  bool headersDone = false;
};

inline std::string findHeader(const std::vector<Header> &headers, std::string_view name)
{
  for (const auto &h : headers)
  {
    if (h.name == name)
    {
      return h.value;
    }
  }
  return {};
}

} // namespace detail

/// Server half of the DoH session: collects POSTed requests, sends framed
/// responses. Feed it decrypted bytes; collect outbound bytes after every
/// call.
class H2Server
{
public:
  H2Server()
  {
    Frame settings;
    settings.type = FrameType::Settings;
    settings.payload = settingsPayload({{kSettingsHeaderTableSize, 0}, {kSettingsMaxConcurrentStreams, 128}});
    emit(settings);
  }

  void feed(const Bytes &data)
  {
    if (failed_)
    {
      return;
    }
    buf_.insert(buf_.end(), data.begin(), data.end());
    if (!sawPreface_)
    {
      if (buf_.size() < kPreface.size())
      {
        return;
      }
      if (!std::equal(kPreface.begin(), kPreface.end(), buf_.begin()))
      {
        protocolError("bad connection preface");
        return;
      }
      buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(kPreface.size()));
      sawPreface_ = true;
    }
    try
    {
      while (auto f = takeFrame(buf_))
      {
        onFrame(*f);
      }
    }
    catch (const DxError &e)
    {
      protocolError(e.what());
    }
  }

  std::vector<Request> takeRequests()
  {
    return std::exchange(requests_, {});
  }

  void respond(std::uint32_t streamId, const Response &r)
  {
    std::vector<Header> headers;
    headers.push_back({":status", std::to_string(r.status)});
    if (!r.contentType.empty())
    {
      headers.push_back({"content-type", r.contentType});
    }
    headers.push_back({"content-length", std::to_string(r.body.size())});

    Frame h;
    h.type = FrameType::Headers;
    h.streamId = streamId;
    h.flags = kFlagEndHeaders | (r.body.empty() ? kFlagEndStream : 0);
    h.payload = hpack::encodeBlock(headers);
    emit(h);
    if (!r.body.empty())
    {
      emitData(streamId, r.body);
    }
  }

  Bytes takeOutbound()
  {
    return std::exchange(out_, {});
  }

  bool failed() const
  {
    return failed_;
  }

private:
  void onFrame(const Frame &f)
  {
    switch (f.type)
    {
      case FrameType::Settings:
        if ((f.flags & kFlagAck) == 0)
        {
          Frame ack;
          ack.type = FrameType::Settings;
          ack.flags = kFlagAck;
          emit(ack);
        }
        break;
      case FrameType::Headers:
      {
        if ((f.flags & kFlagEndHeaders) == 0)
        {
          protocolError("CONTINUATION not supported");
          return;
        }
        auto &acc = streams_[f.streamId];
        acc.headers = hpack::decodeBlock(f.payload);
        acc.headersDone = true;
        if ((f.flags & kFlagEndStream) != 0)
        {
          acc.endStream = true;
        }
        finishIfComplete(f.streamId);
        break;
      }
      case FrameType::Data:
      {
        auto &acc = streams_[f.streamId];
        acc.body.insert(acc.body.end(), f.payload.begin(), f.payload.end());
        if ((f.flags & kFlagEndStream) != 0)
        {
          acc.endStream = true;
        }
        finishIfComplete(f.streamId);
        break;
      }
      case FrameType::Ping:
        if ((f.flags & kFlagAck) == 0)
        {
          Frame pong;
          pong.type = FrameType::Ping;
          pong.flags = kFlagAck;
          pong.payload = f.payload;
          emit(pong);
        }
        break;
      case FrameType::WindowUpdate:
      case FrameType::Priority:
      case FrameType::RstStream:
      case FrameType::GoAway:
        break;
      default:
        break;
    }
  }

  void finishIfComplete(std::uint32_t streamId)
  {
    auto it = streams_.find(streamId);
    if (it == streams_.end() || !it->second.headersDone || !it->second.endStream)
    {
      return;
    }
    Request r;
    r.streamId = streamId;
    r.method = detail::findHeader(it->second.headers, ":method");
    r.path = detail::findHeader(it->second.headers, ":path");
    r.authority = detail::findHeader(it->second.headers, ":authority");
    r.contentType = detail::findHeader(it->second.headers, "content-type");
    r.body = std::move(it->second.body);
    streams_.erase(it);
    requests_.push_back(std::move(r));
  }

  void emit(const Frame &f)
  {
    Bytes wire = encodeFrame(f);
    out_.insert(out_.end(), wire.begin(), wire.end());
  }

  void emitData(std::uint32_t streamId, const Bytes &body)
  {
    constexpr std::size_t kMaxFrame = 16384;
    for (std::size_t off = 0; off < body.size(); off += kMaxFrame)
    {
      std::size_t len = std::min(kMaxFrame, body.size() - off);
      Frame d;
      d.type = FrameType::Data;
      d.streamId = streamId;
      d.flags = (off + len == body.size()) ? kFlagEndStream : 0;
      d.payload.assign(body.begin() + static_cast<std::ptrdiff_t>(off),
                       body.begin() + static_cast<std::ptrdiff_t>(off + len));
      emit(d);
    }
  }

  void protocolError(const std::string &reason)
  {
    failed_ = true;
    Frame goaway;
    goaway.type = FrameType::GoAway;
    ByteWriter w;
    w.u32(0);
    w.u32(0x1); // PROTOCOL_ERROR
    Bytes payload = w.take();
    payload.insert(payload.end(), reason.begin(), reason.end());
    goaway.payload = std::move(payload);
    emit(goaway);
  }

  Bytes buf_;
  Bytes out_;
  bool sawPreface_ = false;
  bool failed_ = false;
  std::map<std::uint32_t, detail::StreamAccum> streams_;
  std::vector<Request> requests_;
};

/// Client half: one POST per stream, odd stream ids.
class H2Client
{
public:
  H2Client()
  {
    out_.insert(out_.end(), kPreface.begin(), kPreface.end());
    Frame settings;
    settings.type = FrameType::Settings;
    settings.payload = settingsPayload({{kSettingsHeaderTableSize, 0}, {kSettingsEnablePush, 0}});
    emit(settings);
  }

  std::uint32_t sendPost(const std::string &path, const std::string &authority, const std::string &contentType,
                         const Bytes &body)
  {
    std::uint32_t streamId = nextStreamId_;
    nextStreamId_ += 2;

    std::vector<Header> headers;
    headers.push_back({":method", "POST"});
    headers.push_back({":scheme", "https"});
    headers.push_back({":authority", authority});
    headers.push_back({":path", path});
    headers.push_back({"accept", contentType});
    headers.push_back({"content-type", contentType});
    headers.push_back({"content-length", std::to_string(body.size())});

    Frame h;
    h.type = FrameType::Headers;
    h.streamId = streamId;
    h.flags = kFlagEndHeaders | (body.empty() ? kFlagEndStream : 0);
    h.payload = hpack::encodeBlock(headers);
    emit(h);
    if (!body.empty())
    {
      Frame d;
      d.type = FrameType::Data;
      d.streamId = streamId;
      d.flags = kFlagEndStream;
      d.payload = body;
      emit(d);
    }
    return streamId;
  }

  /// GET with the request encoded in the path (query string), no body.
  std::uint32_t sendGet(const std::string &path, const std::string &authority, const std::string &accept)
  {
    std::uint32_t streamId = nextStreamId_;
    nextStreamId_ += 2;

    std::vector<Header> headers;
    headers.push_back({":method", "GET"});
    headers.push_back({":scheme", "https"});
    headers.push_back({":authority", authority});
    headers.push_back({":path", path});
    headers.push_back({"accept", accept});

    Frame h;
    h.type = FrameType::Headers;
    h.streamId = streamId;
    h.flags = kFlagEndHeaders | kFlagEndStream;
    h.payload = hpack::encodeBlock(headers);
    emit(h);
    return streamId;
  }

  void feed(const Bytes &data)
  {
    buf_.insert(buf_.end(), data.begin(), data.end());
    while (auto f = takeFrame(buf_))
    {
      onFrame(*f);
    }
  }

  /// The completed response for a stream, once END_STREAM has arrived.
  std::optional<Response> takeResponse(std::uint32_t streamId)
  {
    auto it = streams_.find(streamId);
    if (it == streams_.end() || !it->second.endStream)
    {
      return std::nullopt;
    }
    Response r;
    std::string status = detail::findHeader(it->second.headers, ":status");
    r.status = status.empty() ? 0 : std::stoi(status);
    r.contentType = detail::findHeader(it->second.headers, "content-type");
    r.body = std::move(it->second.body);
    streams_.erase(it);
    return r;
  }

  Bytes takeOutbound()
  {
    return std::exchange(out_, {});
  }

private:
  void onFrame(const Frame &f)
  {
    switch (f.type)
    {
      case FrameType::Settings:
        if ((f.flags & kFlagAck) == 0)
        {
          Frame ack;
          ack.type = FrameType::Settings;
          ack.flags = kFlagAck;
          emit(ack);
        }
        break;
      case FrameType::Headers:
      {
        if ((f.flags & kFlagEndHeaders) == 0)
        {
          throw DxError(Errc::malformed_response, "CONTINUATION not supported");
        }
        auto &acc = streams_[f.streamId];
        acc.headers = hpack::decodeBlock(f.payload);
        acc.headersDone = true;
        if ((f.flags & kFlagEndStream) != 0)
        {
          acc.endStream = true;
        }
        break;
      }
      case FrameType::Data:
      {
        auto &acc = streams_[f.streamId];
        acc.body.insert(acc.body.end(), f.payload.begin(), f.payload.end());
        if ((f.flags & kFlagEndStream) != 0)
        {
          acc.endStream = true;
        }
        break;
      }
      case FrameType::Ping:
        if ((f.flags & kFlagAck) == 0)
        {
          Frame pong;
          pong.type = FrameType::Ping;
          pong.flags = kFlagAck;
          pong.payload = f.payload;
          emit(pong);
        }
        break;
      case FrameType::GoAway:
        throw DxError(Errc::reset, "server sent GOAWAY");
      default:
        break;
    }
  }

  void emit(const Frame &f)
  {
    Bytes wire = encodeFrame(f);
    out_.insert(out_.end(), wire.begin(), wire.end());
  }

  Bytes buf_;
  Bytes out_;
  std::uint32_t nextStreamId_ = 1;
  std::map<std::uint32_t, detail::StreamAccum> streams_;
};

} // namespace doxbench::net::h2
