// Copyright 2026 The doxbench Authors
// SPDX-License-Identifier: Apache-2.0

/// \file bytes.hpp
/// \brief Big-endian byte writer/reader plus QUIC-style variable-length
/// integers. All wire encoding in the suite goes through these helpers.

#pragma once

#include <cstdint>
#include <cstring>
#include <string>

#include "doxbench/common.hpp"

namespace doxbench
{

class ByteWriter
{
public:
  ByteWriter() = default;

  void u8(std::uint8_t v) { buf_.push_back(v); }

  void u16(std::uint16_t v)
  {
    buf_.push_back(static_cast<std::uint8_t>(v >> 8));
    buf_.push_back(static_cast<std::uint8_t>(v & 0xff));
  }

  void u32(std::uint32_t v)
  {
    for (int shift = 24; shift >= 0; shift -= 8)
    {
      buf_.push_back(static_cast<std::uint8_t>((v >> shift) & 0xff));
    }
  }

  void u64(std::uint64_t v)
  {
    for (int shift = 56; shift >= 0; shift -= 8)
    {
      buf_.push_back(static_cast<std::uint8_t>((v >> shift) & 0xff));
    }
  }

  void raw(const void *p, std::size_t n)
  {
    const auto *b = static_cast<const std::uint8_t *>(p);
    buf_.insert(buf_.end(), b, b + n);
  }

  void raw(const Bytes &b) { buf_.insert(buf_.end(), b.begin(), b.end()); }

  void raw(std::string_view s) { raw(s.data(), s.size()); }

  /// QUIC variable-length integer (1/2/4/8 bytes, 2-bit length prefix).
  void varint(std::uint64_t v)
  {
    if (v < (1ull << 6))
    {
      u8(static_cast<std::uint8_t>(v));
    }
    else if (v < (1ull << 14))
    {
      u16(static_cast<std::uint16_t>(v | 0x4000));
    }
    else if (v < (1ull << 30))
    {
      u32(static_cast<std::uint32_t>(v | 0x80000000u));
    }
    else
    {
      u64(v | 0xC000000000000000ull);
    }
  }

  std::size_t size() const { return buf_.size(); }
  const Bytes &bytes() const { return buf_; }
  Bytes take() { return std::move(buf_); }

  /// Overwrite a previously written big-endian u16 (for backpatching lengths).
  void patchU16(std::size_t pos, std::uint16_t v)
  {
    buf_[pos] = static_cast<std::uint8_t>(v >> 8);
    buf_[pos + 1] = static_cast<std::uint8_t>(v & 0xff);
  }

private:
  Bytes buf_;
};

class ByteReader
{
public:
  ByteReader(const std::uint8_t *data, std::size_t size) : data_(data), size_(size) {}
  explicit ByteReader(const Bytes &b) : data_(b.data()), size_(b.size()) {}

  std::size_t remaining() const { return size_ - pos_; }
  std::size_t position() const { return pos_; }
  bool atEnd() const { return pos_ >= size_; }

  void require(std::size_t n) const
  {
    if (remaining() < n)
    {
      throw DxError(Errc::truncated_input, "need " + std::to_string(n) + " bytes");
    }
  }

  std::uint8_t u8()
  {
    require(1);
    return data_[pos_++];
  }

  std::uint16_t u16()
  {
    require(2);
    std::uint16_t v = static_cast<std::uint16_t>(data_[pos_] << 8 | data_[pos_ + 1]);
    pos_ += 2;
    return v;
  }

  std::uint32_t u32()
  {
    require(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
    {
      v = (v << 8) | data_[pos_ + i];
    }
    pos_ += 4;
    return v;
  }

  std::uint64_t u64()
  {
    require(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
    {
      v = (v << 8) | data_[pos_ + i];
    }
    pos_ += 8;
    return v;
  }

  Bytes raw(std::size_t n)
  {
    require(n);
    Bytes out(data_ + pos_, data_ + pos_ + n);
    pos_ += n;
    return out;
  }

  void skip(std::size_t n)
  {
    require(n);
    pos_ += n;
  }

  std::uint64_t varint()
  {
    require(1);
    std::uint8_t first = data_[pos_];
    int len = 1 << (first >> 6);
    require(static_cast<std::size_t>(len));
    std::uint64_t v = first & 0x3f;
    for (int i = 1; i < len; ++i)
    {
      v = (v << 8) | data_[pos_ + i];
    }
    pos_ += static_cast<std::size_t>(len);
    return v;
  }

  const std::uint8_t *cursor() const { return data_ + pos_; }

private:
  const std::uint8_t *data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

inline std::string toHex(const Bytes &b)
{
  static const char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(b.size() * 2);
  for (auto c : b)
  {
    out.push_back(digits[c >> 4]);
    out.push_back(digits[c & 0xf]);
  }
  return out;
}

inline Bytes fromHex(std::string_view hex)
{
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw DxError(Errc::config_invalid, "bad hex digit");
  };
  if (hex.size() % 2 != 0)
  {
    throw DxError(Errc::config_invalid, "odd hex length");
  }
  Bytes out;
  out.reserve(hex.size() / 2);
  for (std::size_t i = 0; i < hex.size(); i += 2)
  {
    out.push_back(static_cast<std::uint8_t>(nibble(hex[i]) << 4 | nibble(hex[i + 1])));
  }
  return out;
}

} // namespace doxbench
