// Copyright 2026 The doxbench Authors
// SPDX-License-Identifier: Apache-2.0

/// \file emu_stream.hpp
/// \brief ByteStream adapter over the user-space reliable link. Blocking
/// with deadlines like the kernel-TCP stream, but every flight, including
/// the connect handshake, is an ordinary UDP datagram the peer can delay.

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <memory>
#include <random>

#include "doxbench/common.hpp"
#include "doxbench/net/emu.hpp"
#include "doxbench/net/socket.hpp"
#include "doxbench/net/stream.hpp"

namespace doxbench::transport
{

class EmuByteStream final : public net::ByteStream
{
public:
  using Deadline = net::Deadline;

  /// Performs the SYN handshake; throws connect_timeout when the deadline
  /// passes without a SYN-ACK.
  static std::unique_ptr<EmuByteStream> connect(const net::Endpoint &dest, const net::Deadline &deadline)
  {
    std::unique_ptr<EmuByteStream> s(new EmuByteStream(dest));
    while (!s->conn_->established())
    {
      if (deadline.expired())
      {
        throw DxError(Errc::connect_timeout, "emu connect " + dest.str());
      }
      s->pumpOnce(deadline);
    }
    return s;
  }

  void send(const Bytes &data, const Deadline &deadline) override
  {
    conn_->send(data, nowMs());
    flushOutbound();
    (void)deadline;
  }

  Bytes recvSome(const Deadline &deadline) override
  {
    for (;;)
    {
      Bytes got = conn_->takeDelivered();
      if (!got.empty())
      {
        return got;
      }
      if (conn_->eof())
      {
        return {};
      }
      if (deadline.expired())
      {
        throw DxError(Errc::timeout, "emu recv");
      }
      pumpOnce(deadline);
    }
  }

  void shutdownSend() override
  {
    conn_->close(nowMs());
    flushOutbound();
  }

  std::uint64_t retransmissions() const override
  {
    return conn_->retransmissions();
  }

  /// SYN to SYN-ACK, as reported by the link state machine.
  std::optional<std::uint64_t> connectMs() const
  {
    return conn_->connectMs();
  }

  /// Run the link until pending segments (including a FIN) are
  /// acknowledged or the deadline passes. Best-effort by design.
  void drain(const Deadline &deadline)
  {
    while (!conn_->drained() && !deadline.expired())
    {
      pumpOnce(deadline);
    }
  }

private:
  explicit EmuByteStream(const net::Endpoint &dest)
      : dest_(dest), sock_(net::UdpSocket::open()),
        conn_(std::make_unique<net::EmuConn>(
            net::EmuConn::client(randomConnId(), 0)))
  {
    epoch_ = std::chrono::steady_clock::now();
    flushOutbound();
  }

  static std::uint32_t randomConnId()
  {
    static std::atomic<std::uint32_t> counter{1};
    std::random_device rd;
    return rd() ^ counter.fetch_add(0x9E37);
  }

  std::uint64_t nowMs() const
  {
    return static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                          std::chrono::steady_clock::now() - epoch_)
                                          .count());
  }

  void flushOutbound()
  {
    for (const auto &d : conn_->takeOutbound())
    {
      sock_.sendTo(d.encode(), dest_);
    }
  }

  void pumpOnce(const Deadline &deadline)
  {
    std::uint64_t now = nowMs();
    if (auto t = conn_->nextTimerAt(); t && *t <= now)
    {
      conn_->onTimer(now);
      flushOutbound();
    }

    int wait = deadline.remainingMs();
    if (auto t = conn_->nextTimerAt())
    {
      std::uint64_t untilTimer = *t > now ? *t - now : 0;
      wait = std::min<int>(wait, static_cast<int>(untilTimer));
    }
    wait = std::max(0, std::min(wait, 50));

    if (sock_.waitReadable(wait))
    {
      while (auto dg = sock_.tryRecv())
      {
        if (auto d = net::EmuDatagram::decode(dg->payload))
        {
          conn_->onDatagram(*d, nowMs());
        }
      }
      flushOutbound();
    }
  }

  net::Endpoint dest_;
  net::UdpSocket sock_;
  std::unique_ptr<net::EmuConn> conn_;
  std::chrono::steady_clock::time_point epoch_;
};

} // namespace doxbench::transport
