// Copyright 2026 The doxbench Authors
// SPDX-License-Identifier: Apache-2.0

/// \file stream.hpp
/// \brief Byte-stream abstraction shared by every connection-oriented
/// transport, plus the phase-aware meter that feeds byte accounting.
///
/// The meter counts transport payload: bytes handed to (or received from)
/// the underlying stream, split at the handshake/application boundary, and
/// the number of transport PDUs that carried them. On kernel TCP a "PDU" is
/// one send or recv burst, which on loopback corresponds to one segment.

#pragma once

#include <netinet/tcp.h>

#include <cstdint>
#include <memory>
#include <utility>

#include "doxbench/common.hpp"
#include "doxbench/net/socket.hpp"

namespace doxbench::net
{

enum class MeterPhase
{
  Handshake,
  Application,
};

struct DirectionMeter
{
  std::uint64_t handshakeBytes = 0;
  std::uint64_t applicationBytes = 0;
  std::uint64_t handshakePdus = 0;
  std::uint64_t applicationPdus = 0;

  void count(MeterPhase phase, std::uint64_t n)
  {
    if (phase == MeterPhase::Handshake)
    {
      handshakeBytes += n;
      handshakePdus += 1;
    }
    else
    {
      applicationBytes += n;
      applicationPdus += 1;
    }
  }
};

struct Meter
{
  DirectionMeter out; // client to resolver
  DirectionMeter in;  // resolver to client
  MeterPhase phase = MeterPhase::Handshake;

  void countOut(std::uint64_t n)
  {
    out.count(phase, n);
  }

  void countIn(std::uint64_t n)
  {
    in.count(phase, n);
  }
};

/// Blocking-with-deadline byte stream. recvSome returns at least one byte,
/// or an empty buffer on orderly EOF, and throws DxError{timeout} when the
/// deadline passes first.
class ByteStream
{
public:
  virtual ~ByteStream() = default;

  virtual void send(const Bytes &data, const Deadline &deadline) = 0;

  virtual Bytes recvSome(const Deadline &deadline) = 0;

  virtual void shutdownSend() {}

  /// Transport-level retransmission count, when the transport can see it.
  virtual std::uint64_t retransmissions() const
  {
    return 0;
  }
};

class TcpByteStream : public ByteStream
{
public:
  explicit TcpByteStream(TcpStream stream) : stream_(std::move(stream)) {}

  void send(const Bytes &data, const Deadline &deadline) override
  {
    stream_.sendAll(data, deadline);
  }

  Bytes recvSome(const Deadline &deadline) override
  {
    for (;;)
    {
      auto chunk = stream_.tryRecv();
      if (chunk)
      {
        return std::move(*chunk);
      }
      if (!stream_.waitReadable(deadline.remainingMs()))
      {
        throw DxError(Errc::timeout, "recv stream");
      }
    }
  }

  void shutdownSend() override
  {
    stream_.shutdownWrite();
  }

  std::uint64_t retransmissions() const override
  {
    tcp_info info{};
    socklen_t len = sizeof(info);
    if (::getsockopt(stream_.fd(), IPPROTO_TCP, TCP_INFO, &info, &len) == 0)
    {
      return info.tcpi_total_retrans;
    }
    return 0;
  }

  TcpStream &raw()
  {
    return stream_;
  }

private:
  TcpStream stream_;
};

/// Decorator that feeds a Meter on every transfer.
class MeteredStream : public ByteStream
{
public:
  explicit MeteredStream(std::unique_ptr<ByteStream> inner) : inner_(std::move(inner)) {}

  void send(const Bytes &data, const Deadline &deadline) override
  {
    inner_->send(data, deadline);
    meter_.countOut(data.size());
  }

  Bytes recvSome(const Deadline &deadline) override
  {
    Bytes chunk = inner_->recvSome(deadline);
    if (!chunk.empty())
    {
      meter_.countIn(chunk.size());
    }
    return chunk;
  }

  void shutdownSend() override
  {
    inner_->shutdownSend();
  }

  std::uint64_t retransmissions() const override
  {
    return inner_->retransmissions();
  }

  void setPhase(MeterPhase phase)
  {
    meter_.phase = phase;
  }

  const Meter &meter() const
  {
    return meter_;
  }

  ByteStream &inner()
  {
    return *inner_;
  }

private:
  std::unique_ptr<ByteStream> inner_;
  Meter meter_;
};

/// Pull-based reader that reassembles length-prefixed messages from a
/// ByteStream.
class StreamReader
{
public:
  explicit StreamReader(ByteStream &stream) : stream_(stream) {}

  /// Reads until `n` bytes are buffered, then consumes and returns them.
  Bytes readExact(std::size_t n, const Deadline &deadline)
  {
    fill(n, deadline);
    Bytes out(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(n));
    buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(n));
    return out;
  }

  /// Reads one 2-byte length-prefixed message.
  Bytes readFramed(const Deadline &deadline)
  {
    fill(2, deadline);
    std::size_t len = static_cast<std::size_t>(buffer_[0]) << 8 | buffer_[1];
    fill(2 + len, deadline);
    Bytes out(buffer_.begin() + 2, buffer_.begin() + 2 + static_cast<std::ptrdiff_t>(len));
    buffer_.erase(buffer_.begin(), buffer_.begin() + 2 + static_cast<std::ptrdiff_t>(len));
    return out;
  }

private:
  void fill(std::size_t n, const Deadline &deadline)
  {
    while (buffer_.size() < n)
    {
      Bytes chunk = stream_.recvSome(deadline);
      if (chunk.empty())
      {
        throw DxError(Errc::incomplete_frame, "peer closed mid-message");
      }
      buffer_.insert(buffer_.end(), chunk.begin(), chunk.end());
    }
  }

  ByteStream &stream_;
  Bytes buffer_;
};

} // namespace doxbench::net
