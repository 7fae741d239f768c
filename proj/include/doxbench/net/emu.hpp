// Copyright 2026 The doxbench Authors
// SPDX-License-Identifier: Apache-2.0

/// \file emu.hpp
/// \brief User-space connection emulation over UDP datagrams.
///
/// The kernel completes a real TCP 3-way handshake before application code
/// runs, so a mock resolver cannot inject per-direction latency into it.
/// EmuConn reproduces TCP's observable contract at datagram granularity
/// instead: SYN / SYN-ACK / ACK connection setup (one round-trip), an
/// ordered reliable byte stream with cumulative acknowledgements, a 1 s
/// initial retransmission timeout that doubles on each retry and tightens
/// once a round-trip sample exists, and FIN/RST teardown. Both ends are
/// pure state machines driven by injected timestamps, which keeps them
/// testable without sockets; thin adapters pump them over real UDP.

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "doxbench/bytes.hpp"
#include "doxbench/common.hpp"

namespace doxbench::net
{

constexpr std::uint8_t kEmuMagic = 0xE7;
constexpr std::size_t kEmuMaxSegment = 1200;
constexpr std::uint64_t kEmuInitialRtoMs = 1000;
constexpr std::uint64_t kEmuMinRtoMs = 200;

enum class EmuType : std::uint8_t
{
  Syn = 1,
  SynAck = 2,
  Ack = 3,
  Data = 4,
  Fin = 5,
  Rst = 6,
};

struct EmuDatagram
{
  EmuType type = EmuType::Ack;
  std::uint32_t connId = 0;
  std::uint64_t seq = 0;
  std::uint64_t ack = 0;
  Bytes payload;

  Bytes encode() const
  {
    ByteWriter w;
    w.u8(kEmuMagic);
    w.u8(static_cast<std::uint8_t>(type));
    w.u32(connId);
    w.u64(seq);
    w.u64(ack);
    w.u16(static_cast<std::uint16_t>(payload.size()));
    w.raw(payload);
    return w.take();
  }

  static std::optional<EmuDatagram> decode(const Bytes &wire)
  {
    if (wire.size() < 24 || wire[0] != kEmuMagic)
    {
      return std::nullopt;
    }
    ByteReader r(wire);
    r.u8();
    EmuDatagram d;
    auto type = r.u8();
    if (type < 1 || type > 6)
    {
      return std::nullopt;
    }
    d.type = static_cast<EmuType>(type);
    d.connId = r.u32();
    d.seq = r.u64();
    d.ack = r.u64();
    auto len = r.u16();
    if (r.remaining() < len)
    {
      return std::nullopt;
    }
    d.payload = r.raw(len);
    return d;
  }
};

/// One endpoint of an emulated connection. Timestamps are caller-supplied
/// milliseconds on any monotonic scale.
class EmuConn
{
public:
  enum class State
  {
    SynSent,
    SynRcvd,
    Established,
    Closed,
    Reset,
  };

  static EmuConn client(std::uint32_t connId, std::uint64_t nowMs)
  {
    EmuConn c(connId, State::SynSent);
    c.synSentAt_ = nowMs;
    c.handshakeTimer_ = Timer{nowMs + kEmuInitialRtoMs, kEmuInitialRtoMs};
    c.emit(EmuType::Syn, 0, 0);
    return c;
  }

  static EmuConn serverFromSyn(const EmuDatagram &syn, std::uint64_t nowMs)
  {
    EmuConn c(syn.connId, State::SynRcvd);
    c.handshakeTimer_ = Timer{nowMs + kEmuInitialRtoMs, kEmuInitialRtoMs};
    c.emit(EmuType::SynAck, 0, 0);
    return c;
  }

  void onDatagram(const EmuDatagram &d, std::uint64_t nowMs)
  {
    if (d.connId != connId_ || state_ == State::Reset || state_ == State::Closed)
    {
      return;
    }
    switch (d.type)
    {
      case EmuType::Syn:
        // duplicate SYN: re-announce
        if (state_ == State::SynRcvd)
        {
          emit(EmuType::SynAck, 0, recvCum_);
        }
        break;
      case EmuType::SynAck:
        if (state_ == State::SynSent)
        {
          state_ = State::Established;
          connectMs_ = nowMs - synSentAt_;
          handshakeTimer_.reset();
          emit(EmuType::Ack, 0, recvCum_);
          flush(nowMs);
        }
        else
        {
          emit(EmuType::Ack, 0, recvCum_);
        }
        break;
      case EmuType::Ack:
        noteEstablished();
        onAck(d.ack, nowMs);
        break;
      case EmuType::Data:
        noteEstablished();
        onData(d, nowMs);
        break;
      case EmuType::Fin:
        noteEstablished();
        onFin(d, nowMs);
        break;
      case EmuType::Rst:
        state_ = State::Reset;
        break;
    }
  }

  /// Queues application bytes for ordered delivery.
  void send(const Bytes &app, std::uint64_t nowMs)
  {
    for (std::size_t off = 0; off < app.size(); off += kEmuMaxSegment)
    {
      std::size_t len = std::min(kEmuMaxSegment, app.size() - off);
      Segment seg;
      seg.seq = sendNext_;
      seg.data.assign(app.begin() + static_cast<std::ptrdiff_t>(off),
                      app.begin() + static_cast<std::ptrdiff_t>(off + len));
      sendNext_ += len;
      segments_.push_back(std::move(seg));
    }
    if (app.empty())
    {
      return;
    }
    flush(nowMs);
  }

  /// Sends FIN after all queued data; the FIN occupies one sequence slot.
  void close(std::uint64_t nowMs)
  {
    if (finSeq_)
    {
      return;
    }
    finSeq_ = sendNext_;
    sendNext_ += 1;
    Segment fin;
    fin.seq = *finSeq_;
    fin.fin = true;
    segments_.push_back(std::move(fin));
    flush(nowMs);
  }

  void abort()
  {
    emit(EmuType::Rst, 0, 0);
    state_ = State::Reset;
  }

  std::optional<std::uint64_t> nextTimerAt() const
  {
    std::optional<std::uint64_t> at = handshakeTimer_.at;
    for (const auto &seg : segments_)
    {
      if (seg.inFlight && (!at || seg.resendAt < *at))
      {
        at = seg.resendAt;
      }
    }
    return at;
  }

  void onTimer(std::uint64_t nowMs)
  {
    if (handshakeTimer_.at && nowMs >= *handshakeTimer_.at)
    {
      retransmissions_ += 1;
      handshakeTimer_.backoffMs *= 2;
      handshakeTimer_.at = nowMs + handshakeTimer_.backoffMs;
      emit(state_ == State::SynSent ? EmuType::Syn : EmuType::SynAck, 0, recvCum_);
    }
    if (state_ != State::Established && state_ != State::SynRcvd)
    {
      return;
    }
    for (auto &seg : segments_)
    {
      if (seg.inFlight && nowMs >= seg.resendAt)
      {
        retransmissions_ += 1;
        seg.backoffMs *= 2;
        seg.resendAt = nowMs + seg.backoffMs;
        seg.txCount += 1;
        emit(seg.fin ? EmuType::Fin : EmuType::Data, seg.seq, recvCum_, seg.data);
      }
    }
  }

  std::vector<EmuDatagram> takeOutbound()
  {
    return std::exchange(outbound_, {});
  }

  Bytes takeDelivered()
  {
    return std::exchange(delivered_, {});
  }

  State state() const
  {
    return state_;
  }

  bool established() const
  {
    return state_ == State::Established;
  }

  bool eof() const
  {
    return peerClosed_ && delivered_.empty();
  }

  bool peerClosed() const
  {
    return peerClosed_;
  }

  /// True once everything we queued, including a FIN, has been acknowledged.
  bool drained() const
  {
    return segments_.empty();
  }

  std::uint64_t retransmissions() const
  {
    return retransmissions_;
  }

  std::uint32_t connId() const
  {
    return connId_;
  }

  std::optional<std::uint64_t> connectMs() const
  {
    return connectMs_;
  }

private:
  struct Timer
  {
    std::optional<std::uint64_t> at;
    std::uint64_t backoffMs = kEmuInitialRtoMs;

    Timer() = default;

    Timer(std::uint64_t atMs, std::uint64_t backoff) : at(atMs), backoffMs(backoff) {}

    void reset()
    {
      at.reset();
    }
  };

  struct Segment
  {
    std::uint64_t seq = 0;
    Bytes data;
    bool fin = false;
    bool inFlight = false;
    std::uint64_t sentAt = 0;
    std::uint64_t resendAt = 0;
    std::uint64_t backoffMs = kEmuInitialRtoMs;
    int txCount = 0;
  };

  EmuConn(std::uint32_t connId, State state) : connId_(connId), state_(state) {}

  void noteEstablished()
  {
    if (state_ == State::SynRcvd)
    {
      state_ = State::Established;
      handshakeTimer_.reset();
    }
  }

  void emit(EmuType type, std::uint64_t seq, std::uint64_t ack, const Bytes &payload = {})
  {
    EmuDatagram d;
    d.type = type;
    d.connId = connId_;
    d.seq = seq;
    d.ack = ack;
    d.payload = payload;
    outbound_.push_back(std::move(d));
  }

  void flush(std::uint64_t nowMs)
  {
    if (state_ != State::Established)
    {
      return;
    }
    for (auto &seg : segments_)
    {
      if (!seg.inFlight && seg.txCount == 0)
      {
        seg.inFlight = true;
        seg.sentAt = nowMs;
        seg.backoffMs = rtoMs_;
        seg.resendAt = nowMs + seg.backoffMs;
        seg.txCount = 1;
        emit(seg.fin ? EmuType::Fin : EmuType::Data, seg.seq, recvCum_, seg.data);
      }
    }
  }

  void onAck(std::uint64_t ack, std::uint64_t nowMs)
  {
    for (auto it = segments_.begin(); it != segments_.end();)
    {
      std::uint64_t segEnd = it->seq + (it->fin ? 1 : it->data.size());
      if (it->inFlight && segEnd <= ack)
      {
        if (it->txCount == 1)
        {
          std::uint64_t sample = nowMs - it->sentAt;
          srttMs_ = srttMs_ ? (*srttMs_ * 7 + sample) / 8 : sample;
          rtoMs_ = std::max(kEmuMinRtoMs, *srttMs_ * 2);
        }
        it = segments_.erase(it);
      }
      else
      {
        ++it;
      }
    }
  }

  void onData(const EmuDatagram &d, std::uint64_t nowMs)
  {
    if (d.seq + d.payload.size() > recvCum_)
    {
      reorder_[d.seq] = d.payload;
    }
    drainReorder();
    onAck(d.ack, nowMs);
    emit(EmuType::Ack, 0, recvCum_);
  }

  void onFin(const EmuDatagram &d, std::uint64_t nowMs)
  {
    pendingFinSeq_ = d.seq;
    drainReorder();
    onAck(d.ack, nowMs);
    emit(EmuType::Ack, 0, recvCum_);
  }

  void drainReorder()
  {
    for (;;)
    {
      auto it = reorder_.begin();
      bool advanced = false;
      while (it != reorder_.end())
      {
        std::uint64_t end = it->first + it->second.size();
        if (end <= recvCum_)
        {
          it = reorder_.erase(it);
          continue;
        }
        if (it->first <= recvCum_)
        {
          std::size_t skip = static_cast<std::size_t>(recvCum_ - it->first);
          delivered_.insert(delivered_.end(), it->second.begin() + static_cast<std::ptrdiff_t>(skip),
                            it->second.end());
          recvCum_ = end;
          it = reorder_.erase(it);
          advanced = true;
          continue;
        }
        ++it;
      }
      if (!advanced)
      {
        break;
      }
    }
    if (pendingFinSeq_ && *pendingFinSeq_ == recvCum_)
    {
      recvCum_ += 1; // the FIN's sequence slot
      peerClosed_ = true;
      pendingFinSeq_.reset();
    }
  }

  std::uint32_t connId_;
  State state_;
  Timer handshakeTimer_;
  std::uint64_t synSentAt_ = 0;
  std::optional<std::uint64_t> connectMs_;

  std::vector<Segment> segments_;
  std::uint64_t sendNext_ = 0;
  std::optional<std::uint64_t> finSeq_;

  std::map<std::uint64_t, Bytes> reorder_;
  std::uint64_t recvCum_ = 0;
  Bytes delivered_;
  bool peerClosed_ = false;
  std::optional<std::uint64_t> pendingFinSeq_;

  std::optional<std::uint64_t> srttMs_;
  std::uint64_t rtoMs_ = kEmuInitialRtoMs;

  std::uint64_t retransmissions_ = 0;
  std::vector<EmuDatagram> outbound_;
};

} // namespace doxbench::net
