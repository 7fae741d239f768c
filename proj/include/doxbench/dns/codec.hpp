// Copyright 2026 The doxbench Authors
// SPDX-License-Identifier: Apache-2.0

/// \file codec.hpp
/// \brief Minimal DNS wire codec: query encoding, response summarizing, and
/// the 2-byte length framing shared by every stream transport (DoTCP, DoT,
/// and DNS-over-QUIC streams).
///
/// Encoding is deterministic and never emits name compression; decoding
/// accepts compressed names. Unknown record types are passed through as
/// opaque rdata — the suite measures timing, not record semantics.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "doxbench/bytes.hpp"
#include "doxbench/common.hpp"

namespace doxbench::dns
{

enum RType : std::uint16_t
{
  A = 1,
  NS = 2,
  CNAME = 5,
  AAAA = 28,
  OPT = 41,
};

enum RCode : std::uint8_t
{
  NOERROR = 0,
  FORMERR = 1,
  SERVFAIL = 2,
  NXDOMAIN = 3,
};

/// Default EDNS0 advertised UDP payload size. A query with ednsUdpSize unset
/// carries no OPT record at all, which keeps byte-size comparisons clean.
constexpr std::uint16_t kDefaultEdnsUdpSize = 1232;

struct DnsQuery
{
  std::uint16_t id = 0;
  std::string qname;
  std::uint16_t qtype = RType::A;
  bool recursionDesired = true;
  std::optional<std::uint16_t> ednsUdpSize = kDefaultEdnsUdpSize;
};

struct DnsAnswer
{
  std::string name;
  std::uint16_t type = 0;
  std::uint32_t ttlSeconds = 0;
  Bytes rdata;
};

struct DnsResponseSummary
{
  std::uint16_t id = 0;
  std::uint8_t rcode = 0;
  bool truncated = false;
  std::vector<DnsAnswer> answers;
};

namespace detail
{

/// Split a presentation-form name into wire labels, enforcing the label and
/// total-length rules. "" and "." both mean the root name.
inline std::vector<std::string> toLabels(const std::string &qname)
{
  std::vector<std::string> labels;
  if (qname.empty() || qname == ".")
  {
    return labels;
  }
  std::string name = qname;
  if (name.back() == '.')
  {
    name.pop_back(); // fully-qualified form
  }
  std::size_t start = 0;
  std::size_t wireLen = 1; // terminating root octet
  while (start <= name.size())
  {
    std::size_t dot = name.find('.', start);
    std::size_t end = (dot == std::string::npos) ? name.size() : dot;
    std::size_t len = end - start;
    if (len == 0)
    {
      throw DxError(Errc::invalid_name, "empty label in '" + qname + "'");
    }
    if (len > 63)
    {
      throw DxError(Errc::invalid_name, "label longer than 63 octets");
    }
    labels.push_back(name.substr(start, len));
    wireLen += len + 1;
    if (dot == std::string::npos)
    {
      break;
    }
    start = dot + 1;
  }
  if (wireLen > 255)
  {
    throw DxError(Errc::invalid_name, "name longer than 255 octets");
  }
  return labels;
}

inline void writeName(ByteWriter &w, const std::string &qname)
{
  for (const auto &label : toLabels(qname))
  {
    w.u8(static_cast<std::uint8_t>(label.size()));
    w.raw(label);
  }
  w.u8(0);
}

/// Read a possibly compressed name. Pointers must target an earlier offset
/// than any previously visited position, which rules out loops.
inline std::string readName(ByteReader &r, const std::uint8_t *base, std::size_t msgSize)
{
  std::string out;
  std::size_t guard = msgSize; // every pointer must go strictly backwards
  bool jumped = false;
  std::size_t pos = r.position();
  int labels = 0;
  while (true)
  {
    if (pos >= msgSize)
    {
      throw DxError(Errc::truncated_input, "name runs past message end");
    }
    std::uint8_t len = base[pos];
    if ((len & 0xC0) == 0xC0)
    {
      if (pos + 1 >= msgSize)
      {
        throw DxError(Errc::truncated_input, "dangling compression pointer");
      }
      std::size_t target = (static_cast<std::size_t>(len & 0x3f) << 8) | base[pos + 1];
      if (target >= guard)
      {
        throw DxError(Errc::malformed_compression_pointer,
                      "pointer to offset " + std::to_string(target));
      }
      if (!jumped)
      {
        r.skip(pos + 2 - r.position());
        jumped = true;
      }
      guard = target;
      pos = target;
      continue;
    }
    if ((len & 0xC0) != 0)
    {
      throw DxError(Errc::malformed_compression_pointer, "reserved label type");
    }
    if (len == 0)
    {
      if (!jumped)
      {
        r.skip(pos + 1 - r.position());
      }
      return out;
    }
    if (pos + 1 + len > msgSize)
    {
      throw DxError(Errc::truncated_input, "label runs past message end");
    }
    if (!out.empty())
    {
      out.push_back('.');
    }
    out.append(reinterpret_cast<const char *>(base + pos + 1), len);
    pos += 1 + len;
    if (++labels > 128 || out.size() > 255)
    {
      throw DxError(Errc::malformed_compression_pointer, "name expansion too long");
    }
  }
}

} // namespace detail

/// \brief Encode a standards-conformant DNS query message.
///
/// Throws DxError{invalid_name} when a label exceeds 63 octets or the name
/// exceeds 255 octets in wire form. Byte-identical output for equal inputs.
inline Bytes encodeQuery(const DnsQuery &q)
{
  ByteWriter w;
  w.u16(q.id);
  std::uint16_t flags = 0;
  if (q.recursionDesired)
  {
    flags |= 0x0100; // RD
  }
  w.u16(flags);
  w.u16(1);                              // QDCOUNT
  w.u16(0);                              // ANCOUNT
  w.u16(0);                              // NSCOUNT
  w.u16(q.ednsUdpSize ? 1 : 0);          // ARCOUNT (OPT)
  detail::writeName(w, q.qname);
  w.u16(q.qtype);
  w.u16(1); // class IN
  if (q.ednsUdpSize)
  {
    w.u8(0);              // root name
    w.u16(RType::OPT);    // type
    w.u16(*q.ednsUdpSize); // requestor payload size
    w.u32(0);             // extended rcode/version/flags, DO clear
    w.u16(0);             // rdlen
  }
  return w.take();
}

/// \brief Parse a response far enough to time and sanity-check it.
///
/// Requires at least the 12-byte header. Answers are parsed with compression
/// support; rdata is kept opaque. Authority/additional sections are ignored.
inline DnsResponseSummary decodeResponse(const Bytes &msg)
{
  if (msg.size() < 12)
  {
    throw DxError(Errc::truncated_input, "message shorter than header");
  }
  ByteReader r(msg);
  DnsResponseSummary out;
  out.id = r.u16();
  std::uint16_t flags = r.u16();
  out.truncated = (flags & 0x0200) != 0;
  out.rcode = static_cast<std::uint8_t>(flags & 0x000f);
  std::uint16_t qd = r.u16();
  std::uint16_t an = r.u16();
  r.u16(); // NSCOUNT
  r.u16(); // ARCOUNT
  for (std::uint16_t i = 0; i < qd; ++i)
  {
    detail::readName(r, msg.data(), msg.size());
    r.skip(4); // qtype + qclass
  }
  for (std::uint16_t i = 0; i < an; ++i)
  {
    DnsAnswer a;
    a.name = detail::readName(r, msg.data(), msg.size());
    a.type = r.u16();
    r.u16(); // class
    a.ttlSeconds = r.u32();
    std::uint16_t rdlen = r.u16();
    a.rdata = r.raw(rdlen);
    out.answers.push_back(std::move(a));
  }
  return out;
}

/// Server-side view of an incoming query: just enough for a zone lookup and
/// for echoing the question back.
struct DnsQuestionView
{
  std::uint16_t id = 0;
  std::string qname;
  std::uint16_t qtype = 0;
  std::uint16_t qclass = 0;
  bool recursionDesired = false;
};

/// \brief Parse the header and first question of a query.
inline DnsQuestionView decodeQuery(const Bytes &msg)
{
  if (msg.size() < 12)
  {
    throw DxError(Errc::truncated_input, "query shorter than header");
  }
  ByteReader r(msg);
  DnsQuestionView out;
  out.id = r.u16();
  std::uint16_t flags = r.u16();
  if ((flags & 0x8000) != 0)
  {
    throw DxError(Errc::malformed_response, "QR bit set on a query");
  }
  out.recursionDesired = (flags & 0x0100) != 0;
  std::uint16_t qd = r.u16();
  if (qd == 0)
  {
    throw DxError(Errc::malformed_response, "query without a question");
  }
  r.skip(6); // ANCOUNT/NSCOUNT/ARCOUNT
  out.qname = detail::readName(r, msg.data(), msg.size());
  out.qtype = r.u16();
  out.qclass = r.u16();
  return out;
}

/// What a server wants to say back; names are emitted uncompressed.
struct DnsResponseSpec
{
  std::uint16_t id = 0;
  std::string qname;
  std::uint16_t qtype = RType::A;
  bool recursionDesired = true;
  std::uint8_t rcode = RCode::NOERROR;
  std::vector<DnsAnswer> answers;
};

/// \brief Encode a response echoing one question. RA is always set.
inline Bytes encodeResponse(const DnsResponseSpec &resp)
{
  ByteWriter w;
  w.u16(resp.id);
  std::uint16_t flags = 0x8080; // QR | RA
  if (resp.recursionDesired)
  {
    flags |= 0x0100;
  }
  flags |= resp.rcode & 0x0f;
  w.u16(flags);
  w.u16(1);
  w.u16(static_cast<std::uint16_t>(resp.answers.size()));
  w.u16(0);
  w.u16(0);
  detail::writeName(w, resp.qname);
  w.u16(resp.qtype);
  w.u16(1); // class IN
  for (const auto &a : resp.answers)
  {
    detail::writeName(w, a.name);
    w.u16(a.type);
    w.u16(1);
    w.u32(a.ttlSeconds);
    w.u16(static_cast<std::uint16_t>(a.rdata.size()));
    w.raw(a.rdata);
  }
  return w.take();
}

/// \brief Pack a dotted-quad address into A-record rdata.
inline Bytes aRdata(const std::string &dottedQuad)
{
  Bytes out;
  std::size_t start = 0;
  for (int i = 0; i < 4; ++i)
  {
    std::size_t dot = dottedQuad.find('.', start);
    std::string part = dottedQuad.substr(start, dot == std::string::npos ? dot : dot - start);
    if (part.empty() || part.size() > 3)
    {
      throw DxError(Errc::config_invalid, "bad IPv4 literal: " + dottedQuad);
    }
    int v = 0;
    for (char c : part)
    {
      if (c < '0' || c > '9')
      {
        throw DxError(Errc::config_invalid, "bad IPv4 literal: " + dottedQuad);
      }
      v = v * 10 + (c - '0');
    }
    if (v > 255 || (i < 3 && dot == std::string::npos) || (i == 3 && dot != std::string::npos))
    {
      throw DxError(Errc::config_invalid, "bad IPv4 literal: " + dottedQuad);
    }
    out.push_back(static_cast<std::uint8_t>(v));
    start = dot + 1;
  }
  return out;
}

/// \brief Prefix a message with its 2-byte big-endian length.
inline Bytes frame(const Bytes &payload)
{
  if (payload.size() > 0xffff)
  {
    throw DxError(Errc::oversize_payload, std::to_string(payload.size()) + " bytes");
  }
  Bytes out;
  out.reserve(payload.size() + 2);
  out.push_back(static_cast<std::uint8_t>(payload.size() >> 8));
  out.push_back(static_cast<std::uint8_t>(payload.size() & 0xff));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

/// \brief Split one framed message off the front of a buffer.
/// Returns (payload, rest). Throws DxError{incomplete_frame} when the buffer
/// does not yet hold the declared length.
inline std::pair<Bytes, Bytes> unframe(const Bytes &buf)
{
  if (buf.size() < 2)
  {
    throw DxError(Errc::incomplete_frame, "no length prefix yet");
  }
  std::size_t len = static_cast<std::size_t>(buf[0]) << 8 | buf[1];
  if (buf.size() < 2 + len)
  {
    throw DxError(Errc::incomplete_frame,
                  "declared " + std::to_string(len) + ", have " + std::to_string(buf.size() - 2));
  }
  Bytes payload(buf.begin() + 2, buf.begin() + 2 + static_cast<std::ptrdiff_t>(len));
  Bytes rest(buf.begin() + 2 + static_cast<std::ptrdiff_t>(len), buf.end());
  return {std::move(payload), std::move(rest)};
}

/// True when a complete frame is available at the front of the buffer.
inline bool hasCompleteFrame(const Bytes &buf)
{
  if (buf.size() < 2)
  {
    return false;
  }
  std::size_t len = static_cast<std::size_t>(buf[0]) << 8 | buf[1];
  return buf.size() >= 2 + len;
}

} // namespace doxbench::dns
