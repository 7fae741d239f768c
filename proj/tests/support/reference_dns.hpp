// Copyright 2026 The doxbench Authors
// SPDX-License-Identifier: Apache-2.0

/// \file reference_dns.hpp
/// \brief Test-only reference DNS encoder, written independently of the
/// library codec so the two can cross-check each other. Kept deliberately
/// naive: raw byte pushes, no shared helpers.

#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

namespace refdns
{

using Buf = std::vector<std::uint8_t>;

inline void push16(Buf &b, unsigned v)
{
  b.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  b.push_back(static_cast<std::uint8_t>(v & 0xff));
}

inline void push32(Buf &b, unsigned long v)
{
  b.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
  b.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  b.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  b.push_back(static_cast<std::uint8_t>(v & 0xff));
}

inline void pushName(Buf &b, const std::string &name)
{
  std::stringstream ss(name);
  std::string label;
  while (std::getline(ss, label, '.'))
  {
    if (label.empty())
    {
      continue;
    }
    b.push_back(static_cast<std::uint8_t>(label.size()));
    for (char c : label)
    {
      b.push_back(static_cast<std::uint8_t>(c));
    }
  }
  b.push_back(0);
}

/// Plain query: header, one question, no EDNS.
inline Buf query(unsigned id, const std::string &name, unsigned qtype, bool rd)
{
  Buf b;
  push16(b, id);
  push16(b, rd ? 0x0100u : 0x0000u);
  push16(b, 1);
  push16(b, 0);
  push16(b, 0);
  push16(b, 0);
  pushName(b, name);
  push16(b, qtype);
  push16(b, 1);
  return b;
}

struct RefAnswer
{
  std::string name;
  unsigned type;
  unsigned long ttl;
  Buf rdata;
  bool compressName = false; ///< emit a pointer to the question name instead
};

/// Response with one question and a list of answers. When compressName is
/// set the answer name is emitted as a pointer to offset 12 (the question).
inline Buf response(unsigned id, const std::string &qname, unsigned qtype, unsigned rcode,
                    const std::vector<RefAnswer> &answers)
{
  Buf b;
  push16(b, id);
  push16(b, 0x8180u | (rcode & 0xf)); // QR|RD|RA
  push16(b, 1);
  push16(b, answers.size());
  push16(b, 0);
  push16(b, 0);
  pushName(b, qname);
  push16(b, qtype);
  push16(b, 1);
  for (const auto &a : answers)
  {
    if (a.compressName)
    {
      b.push_back(0xC0);
      b.push_back(0x0C);
    }
    else
    {
      pushName(b, a.name);
    }
    push16(b, a.type);
    push16(b, 1);
    push32(b, a.ttl);
    push16(b, a.rdata.size());
    b.insert(b.end(), a.rdata.begin(), a.rdata.end());
  }
  return b;
}

inline Buf ipv4(unsigned a, unsigned b2, unsigned c, unsigned d)
{
  return {static_cast<std::uint8_t>(a), static_cast<std::uint8_t>(b2),
          static_cast<std::uint8_t>(c), static_cast<std::uint8_t>(d)};
}

} // namespace refdns
