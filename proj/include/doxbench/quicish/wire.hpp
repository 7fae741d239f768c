// Copyright 2026 The doxbench Authors
// SPDX-License-Identifier: Apache-2.0

/// \file wire.hpp
/// \brief Datagram wire format of the QUIC-style transport.
///
/// Packets follow the version-independent invariants for long and short
/// headers: first-byte form bit, 32-bit version, length-prefixed connection
/// ids, version negotiation carried in a packet with version zero echoing
/// the client's ids swapped. Inside packets this implementation carries a
/// single reliable byte stream per direction ("carrier") instead of
/// encrypted per-space frames, so it interoperates only with itself; the
/// parts observable from outside a connection (header shapes, padding,
/// negotiation) are kept faithful so probes exercise the real thing.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "doxbench/bytes.hpp"
#include "doxbench/common.hpp"

namespace doxbench::quicish
{

constexpr std::uint32_t kVersion = 0xD0C00001;
constexpr std::size_t kCidLen = 8;
constexpr std::size_t kMinInitialDatagram = 1200;

enum class PacketType : std::uint8_t
{
  Initial = 0,
  ZeroRtt = 1,
  Handshake = 2,
  Retry = 3,
  Short = 0xFF,
};

struct PaddingFrame
{
  std::uint64_t count = 1;
};

struct PingFrame
{
};

/// Cumulative acknowledgement of the peer's carrier stream.
struct AckFrame
{
  std::uint64_t cumOffset = 0;
};

/// A slice of the reliable byte stream that carries TLS data.
struct CarrierFrame
{
  std::uint64_t offset = 0;
  Bytes data;
};

struct NewTokenFrame
{
  Bytes token;
};

struct CloseFrame
{
  std::uint64_t code = 0;
  std::string reason;
};

struct DoneFrame
{
};

using Frame = std::variant<PaddingFrame, PingFrame, AckFrame, CarrierFrame, NewTokenFrame, CloseFrame, DoneFrame>;

struct Packet
{
  PacketType type = PacketType::Initial;
  std::uint32_t version = kVersion;
  Bytes dcid;
  Bytes scid; // long headers only
  Bytes token; // Initial only
  std::uint32_t packetNumber = 0;
  std::vector<Frame> frames;
};

namespace wire
{

constexpr std::uint8_t kFormBit = 0x80;
constexpr std::uint8_t kFixedBit = 0x40;

inline void encodeFrame(ByteWriter &w, const Frame &f)
{
  if (const auto *pad = std::get_if<PaddingFrame>(&f))
  {
    for (std::uint64_t i = 0; i < pad->count; ++i)
    {
      w.u8(0x00);
    }
  }
  else if (std::get_if<PingFrame>(&f))
  {
    w.u8(0x01);
  }
  else if (const auto *ack = std::get_if<AckFrame>(&f))
  {
    w.u8(0x02);
    w.varint(ack->cumOffset);
  }
  else if (const auto *c = std::get_if<CarrierFrame>(&f))
  {
    w.u8(0x06);
    w.varint(c->offset);
    w.varint(c->data.size());
    w.raw(c->data);
  }
  else if (const auto *t = std::get_if<NewTokenFrame>(&f))
  {
    w.u8(0x07);
    w.varint(t->token.size());
    w.raw(t->token);
  }
  else if (const auto *cl = std::get_if<CloseFrame>(&f))
  {
    w.u8(0x1c);
    w.varint(cl->code);
    w.varint(cl->reason.size());
    w.raw(Bytes(cl->reason.begin(), cl->reason.end()));
  }
  else if (std::get_if<DoneFrame>(&f))
  {
    w.u8(0x1e);
  }
}

inline std::vector<Frame> decodeFrames(ByteReader &r, std::size_t payloadLen)
{
  std::vector<Frame> frames;
  std::size_t end = r.position() + payloadLen;
  std::uint64_t padRun = 0;
  while (r.position() < end)
  {
    std::uint8_t type = r.u8();
    if (type == 0x00)
    {
      padRun += 1;
      continue;
    }
    if (padRun > 0)
    {
      frames.push_back(PaddingFrame{padRun});
      padRun = 0;
    }
    switch (type)
    {
      case 0x01:
        frames.push_back(PingFrame{});
        break;
      case 0x02:
        frames.push_back(AckFrame{r.varint()});
        break;
      case 0x06:
      {
        CarrierFrame c;
        c.offset = r.varint();
        std::uint64_t len = r.varint();
        if (r.position() + len > end)
        {
          throw DxError(Errc::truncated_input, "carrier frame overruns packet");
        }
        c.data = r.raw(static_cast<std::size_t>(len));
        frames.push_back(std::move(c));
        break;
      }
      case 0x07:
      {
        std::uint64_t len = r.varint();
        if (r.position() + len > end)
        {
          throw DxError(Errc::truncated_input, "token frame overruns packet");
        }
        frames.push_back(NewTokenFrame{r.raw(static_cast<std::size_t>(len))});
        break;
      }
      case 0x1c:
      {
        CloseFrame cl;
        cl.code = r.varint();
        std::uint64_t len = r.varint();
        if (r.position() + len > end)
        {
          throw DxError(Errc::truncated_input, "close frame overruns packet");
        }
        Bytes reason = r.raw(static_cast<std::size_t>(len));
        cl.reason.assign(reason.begin(), reason.end());
        frames.push_back(std::move(cl));
        break;
      }
      case 0x1e:
        frames.push_back(DoneFrame{});
        break;
      default:
        throw DxError(Errc::truncated_input, "unknown frame type " + std::to_string(type));
    }
  }
  if (padRun > 0)
  {
    frames.push_back(PaddingFrame{padRun});
  }
  return frames;
}

} // namespace wire

inline Bytes encodePacket(const Packet &p)
{
  ByteWriter w;
  if (p.type == PacketType::Short)
  {
    w.u8(wire::kFixedBit | 0x03); // short form, 4-byte packet number
    w.raw(p.dcid);
    w.u32(p.packetNumber);
    for (const auto &f : p.frames)
    {
      wire::encodeFrame(w, f);
    }
    return w.take();
  }

  std::uint8_t typeBits = static_cast<std::uint8_t>(p.type) & 0x03;
  w.u8(static_cast<std::uint8_t>(wire::kFormBit | wire::kFixedBit | (typeBits << 4) | 0x03));
  w.u32(p.version);
  w.u8(static_cast<std::uint8_t>(p.dcid.size()));
  w.raw(p.dcid);
  w.u8(static_cast<std::uint8_t>(p.scid.size()));
  w.raw(p.scid);
  if (p.type == PacketType::Initial)
  {
    w.varint(p.token.size());
    w.raw(p.token);
  }

  ByteWriter payload;
  for (const auto &f : p.frames)
  {
    wire::encodeFrame(payload, f);
  }
  Bytes body = payload.take();
  w.varint(4 + body.size()); // packet number plus frames
  w.u32(p.packetNumber);
  w.raw(body);
  return w.take();
}

/// A version negotiation datagram: long form, version zero, the client's
/// connection ids echoed swapped, then the list of supported versions.
inline Bytes encodeVersionNegotiation(const Bytes &clientDcid, const Bytes &clientScid,
                                      const std::vector<std::uint32_t> &versions)
{
  ByteWriter w;
  w.u8(wire::kFormBit | wire::kFixedBit);
  w.u32(0);
  w.u8(static_cast<std::uint8_t>(clientScid.size()));
  w.raw(clientScid);
  w.u8(static_cast<std::uint8_t>(clientDcid.size()));
  w.raw(clientDcid);
  for (auto v : versions)
  {
    w.u32(v);
  }
  return w.take();
}

struct VersionNegotiation
{
  Bytes dcid;
  Bytes scid;
  std::vector<std::uint32_t> versions;
};

using ParsedDatagram = std::variant<Packet, VersionNegotiation>;

inline bool isLongHeader(const Bytes &datagram)
{
  return !datagram.empty() && (datagram[0] & wire::kFormBit) != 0;
}

/// Peeks the version of a long-header datagram without full parsing.
inline std::optional<std::uint32_t> peekVersion(const Bytes &datagram)
{
  if (!isLongHeader(datagram) || datagram.size() < 5)
  {
    return std::nullopt;
  }
  return static_cast<std::uint32_t>(datagram[1]) << 24 | static_cast<std::uint32_t>(datagram[2]) << 16 |
         static_cast<std::uint32_t>(datagram[3]) << 8 | datagram[4];
}

/// Peeks the destination connection id so a listener can route datagrams.
inline std::optional<Bytes> peekDcid(const Bytes &datagram)
{
  try
  {
    ByteReader r(datagram);
    std::uint8_t b0 = r.u8();
    if ((b0 & wire::kFormBit) != 0)
    {
      r.u32();
      std::uint8_t len = r.u8();
      return r.raw(len);
    }
    return r.raw(kCidLen);
  }
  catch (const DxError &)
  {
    return std::nullopt;
  }
}

/// Source connection id of a long-header packet; short headers carry none.
inline std::optional<Bytes> peekScid(const Bytes &datagram)
{
  try
  {
    ByteReader r(datagram);
    std::uint8_t b0 = r.u8();
    if ((b0 & wire::kFormBit) == 0)
    {
      return std::nullopt;
    }
    r.u32();
    std::uint8_t dcil = r.u8();
    r.skip(dcil);
    std::uint8_t scil = r.u8();
    return r.raw(scil);
  }
  catch (const DxError &)
  {
    return std::nullopt;
  }
}

/// Parses every packet coalesced into one datagram. Short-header packets
/// consume the remainder of the datagram and need the connection id length
/// supplied from connection state.
inline std::vector<ParsedDatagram> decodeDatagram(const Bytes &datagram)
{
  std::vector<ParsedDatagram> out;
  ByteReader r(datagram);
  while (r.remaining() > 0)
  {
    std::uint8_t b0 = r.u8();
    if ((b0 & wire::kFormBit) == 0)
    {
      Packet p;
      p.type = PacketType::Short;
      p.dcid = r.raw(kCidLen);
      p.packetNumber = r.u32();
      p.frames = wire::decodeFrames(r, r.remaining());
      out.push_back(std::move(p));
      return out;
    }
    std::uint32_t version = r.u32();
    std::uint8_t dcidLen = r.u8();
    Bytes dcid = r.raw(dcidLen);
    std::uint8_t scidLen = r.u8();
    Bytes scid = r.raw(scidLen);
    if (version == 0)
    {
      VersionNegotiation vn;
      vn.dcid = std::move(dcid);
      vn.scid = std::move(scid);
      while (r.remaining() >= 4)
      {
        vn.versions.push_back(r.u32());
      }
      out.push_back(std::move(vn));
      return out;
    }
    Packet p;
    p.type = static_cast<PacketType>((b0 >> 4) & 0x03);
    p.version = version;
    p.dcid = std::move(dcid);
    p.scid = std::move(scid);
    if (p.type == PacketType::Initial)
    {
      std::uint64_t tokenLen = r.varint();
      p.token = r.raw(static_cast<std::size_t>(tokenLen));
    }
    std::uint64_t length = r.varint();
    if (length < 4 || length - 4 > r.remaining())
    {
      throw DxError(Errc::truncated_input, "packet length field overruns datagram");
    }
    p.packetNumber = r.u32();
    p.frames = wire::decodeFrames(r, static_cast<std::size_t>(length - 4));
    out.push_back(std::move(p));
  }
  return out;
}

} // namespace doxbench::quicish
