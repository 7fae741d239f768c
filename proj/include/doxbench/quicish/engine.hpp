// Copyright 2026 The doxbench Authors
// SPDX-License-Identifier: Apache-2.0

/// \file engine.hpp
/// \brief Connection engines for the QUIC-style transport.
///
/// Each engine is a pure state machine: datagrams and timestamps go in,
/// datagrams come out, and the genuine TLS 1.3 handshake runs through the
/// embedded TlsEngine over a reliable carrier stream per direction. The
/// transport-relevant behaviors are faithful:
///
///  - client INITIAL-carrying datagrams are padded to 1200 bytes,
///  - an unvalidated server never sends more than three times what it has
///    received; a valid address token or a returned acknowledgement lifts
///    the limit,
///  - carrier data retransmits on a 1 s initial timeout that doubles per
///    retry and tightens once a round-trip sample exists,
///  - the server hands out a fresh address token each connection.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "doxbench/net/stream.hpp"
#include "doxbench/quicish/wire.hpp"
#include "doxbench/tlsx/engine.hpp"

namespace doxbench::quicish
{

constexpr std::uint64_t kInitialRtoMs = 1000;
constexpr std::uint64_t kMinRtoMs = 200;
constexpr std::size_t kMaxCarrierData = 1100;

namespace detail
{

struct CarrierSender
{
  struct Seg
  {
    std::uint64_t off = 0;
    Bytes data;
    bool handshakePhase = true;
    bool sentOnce = false;
    std::uint64_t sentAt = 0;
    std::uint64_t resendAt = 0;
    std::uint64_t backoffMs = kInitialRtoMs;
    int txCount = 0;
  };

  std::vector<Seg> segs;
  std::uint64_t nextOff = 0;
  std::uint64_t rtoMs = kInitialRtoMs;
  std::optional<std::uint64_t> srttMs;
  std::uint64_t retransmissions = 0;

  void queue(const Bytes &data, bool handshakePhase)
  {
    for (std::size_t off = 0; off < data.size(); off += kMaxCarrierData)
    {
      std::size_t len = std::min(kMaxCarrierData, data.size() - off);
      Seg s;
      s.off = nextOff;
      s.data.assign(data.begin() + static_cast<std::ptrdiff_t>(off),
                    data.begin() + static_cast<std::ptrdiff_t>(off + len));
      s.handshakePhase = handshakePhase;
      nextOff += len;
      segs.push_back(std::move(s));
    }
  }

  void onAck(std::uint64_t cum, std::uint64_t nowMs)
  {
    for (auto it = segs.begin(); it != segs.end();)
    {
      if (it->sentOnce && it->off + it->data.size() <= cum)
      {
        if (it->txCount == 1)
        {
          std::uint64_t sample = nowMs - it->sentAt;
          srttMs = srttMs ? (*srttMs * 7 + sample) / 8 : sample;
          rtoMs = std::max(kMinRtoMs, *srttMs * 2);
        }
        it = segs.erase(it);
      }
      else
      {
        ++it;
      }
    }
  }

  std::optional<std::uint64_t> nextTimerAt() const
  {
    std::optional<std::uint64_t> at;
    for (const auto &s : segs)
    {
      if (s.sentOnce && (!at || s.resendAt < *at))
      {
        at = s.resendAt;
      }
    }
    return at;
  }

  /// Marks timed-out segments for resend; flush() will emit them.
  void onTimer(std::uint64_t nowMs)
  {
    for (auto &s : segs)
    {
      if (s.sentOnce && nowMs >= s.resendAt)
      {
        s.sentOnce = false; // requeue for the next flush
        s.backoffMs *= 2;
        retransmissions += 1;
      }
    }
  }

  bool pendingData() const
  {
    for (const auto &s : segs)
    {
      if (!s.sentOnce)
      {
        return true;
      }
    }
    return false;
  }
};

struct CarrierReceiver
{
  std::map<std::uint64_t, Bytes> reorder;
  std::uint64_t cum = 0;
  Bytes ready;

  bool onFrame(const CarrierFrame &f)
  {
    if (f.offset + f.data.size() > cum)
    {
      reorder[f.offset] = f.data;
    }
    bool advanced = false;
    for (;;)
    {
      bool step = false;
      for (auto it = reorder.begin(); it != reorder.end();)
      {
        std::uint64_t end = it->first + it->second.size();
        if (end <= cum)
        {
          it = reorder.erase(it);
          continue;
        }
        if (it->first <= cum)
        {
          std::size_t skip = static_cast<std::size_t>(cum - it->first);
          ready.insert(ready.end(), it->second.begin() + static_cast<std::ptrdiff_t>(skip), it->second.end());
          cum = end;
          it = reorder.erase(it);
          step = true;
          advanced = true;
          continue;
        }
        ++it;
      }
      if (!step)
      {
        break;
      }
    }
    return advanced;
  }
};

inline Bytes randomCid(std::mt19937_64 &rng)
{
  Bytes cid(kCidLen);
  for (auto &b : cid)
  {
    b = static_cast<std::uint8_t>(rng());
  }
  return cid;
}

} // namespace detail

/// Byte/PDU tallies at datagram granularity, split at the point the local
/// TLS handshake completed.
struct EngineMeter
{
  net::DirectionMeter out;
  net::DirectionMeter in;
};

class ClientEngine
{
public:
  struct Options
  {
    tlsx::TlsContext ctx;
    tlsx::TlsEngine::ClientOptions tls;
    Bytes token;
    std::uint32_t version = kVersion;
    Bytes earlyData;
    std::uint64_t seed = 0;
  };

  ClientEngine(Options opts, std::uint64_t nowMs)
      : version_(opts.version), token_(std::move(opts.token)),
        tls_(tlsx::TlsEngine::client(opts.ctx, std::move(opts.tls)))
  {
    std::mt19937_64 rng(opts.seed ? opts.seed : 0x9E3779B97F4A7C15ULL);
    scid_ = detail::randomCid(rng);
    dcid_ = detail::randomCid(rng);
    if (!opts.earlyData.empty() && tls_.tryWriteEarly(opts.earlyData))
    {
      earlyOffered_ = true;
    }
    tls_.drive();
    pullTls();
    (void)nowMs;
  }

  void onDatagram(const Bytes &datagram, std::uint64_t nowMs)
  {
    if (failed_)
    {
      return;
    }
    meterIn(datagram.size());
    std::vector<ParsedDatagram> parsed;
    try
    {
      parsed = decodeDatagram(datagram);
    }
    catch (const DxError &)
    {
      return; // not ours; drop
    }
    for (auto &item : parsed)
    {
      if (auto *vn = std::get_if<VersionNegotiation>(&item))
      {
        if (!sawServerPacket_)
        {
          offeredVersions_ = vn->versions;
          fail(Errc::version_negotiation_required, "server negotiates a different version");
        }
        continue;
      }
      auto &p = std::get<Packet>(item);
      sawServerPacket_ = true;
      if (p.type != PacketType::Short && !p.scid.empty())
      {
        dcid_ = p.scid; // adopt the server-chosen id
      }
      for (auto &f : p.frames)
      {
        onFrame(f, nowMs);
      }
    }
    driveTls(nowMs);
  }

  std::vector<Bytes> takeDatagrams(std::uint64_t nowMs)
  {
    flush(nowMs);
    return std::exchange(outDatagrams_, {});
  }

  std::optional<std::uint64_t> nextTimerAt() const
  {
    return sender_.nextTimerAt();
  }

  void onTimer(std::uint64_t nowMs)
  {
    sender_.onTimer(nowMs);
  }

  void writeApp(const Bytes &data, std::uint64_t nowMs)
  {
    tls_.writeApp(data);
    pullTls();
    (void)nowMs;
  }

  Bytes readApp()
  {
    return std::exchange(appIn_, {});
  }

  void close(std::uint64_t nowMs)
  {
    bool hs = !tls_.handshakeDone();
    Packet p = makePacket(hs);
    p.frames.push_back(CloseFrame{0, "done"});
    emitPacket(p, hs);
    (void)nowMs;
  }

  bool handshakeDone() const
  {
    return tls_.handshakeDone();
  }

  /// Sim-clock instant at which the local handshake first completed.
  std::optional<std::uint64_t> handshakeDoneAt() const
  {
    return handshakeDoneAt_;
  }

  bool failed() const
  {
    return failed_;
  }

  Errc errorCode() const
  {
    return errorCode_;
  }

  const std::string &errorText() const
  {
    return errorText_;
  }

  bool resumed() const
  {
    return tls_.resumed();
  }

  bool earlyDataOffered() const
  {
    return earlyOffered_;
  }

  bool earlyDataAccepted() const
  {
    return tls_.earlyDataAccepted();
  }

  std::string alpn() const
  {
    return tls_.alpn();
  }

  std::uint32_t version() const
  {
    return version_;
  }

  const std::vector<std::uint32_t> &offeredVersions() const
  {
    return offeredVersions_;
  }

  std::optional<Bytes> receivedToken() const
  {
    return receivedToken_;
  }

  std::uint64_t retransmissions() const
  {
    return sender_.retransmissions;
  }

  const EngineMeter &meter() const
  {
    return meter_;
  }

  bool peerClosed() const
  {
    return peerClosed_;
  }

private:
  void onFrame(const Frame &f, std::uint64_t nowMs)
  {
    if (const auto *ack = std::get_if<AckFrame>(&f))
    {
      sender_.onAck(ack->cumOffset, nowMs);
    }
    else if (const auto *c = std::get_if<CarrierFrame>(&f))
    {
      receiver_.onFrame(*c);
      ackDirty_ = true;
    }
    else if (const auto *t = std::get_if<NewTokenFrame>(&f))
    {
      receivedToken_ = t->token;
    }
    else if (std::get_if<CloseFrame>(&f))
    {
      peerClosed_ = true;
    }
  }

  void driveTls(std::uint64_t nowMs)
  {
    if (!receiver_.ready.empty())
    {
      tls_.feed(std::exchange(receiver_.ready, {}));
    }
    if (!tls_.handshakeDone())
    {
      if (tls_.drive() == tlsx::HsStatus::Failed)
      {
        fail(tls_.failureCode(), tls_.lastError());
        pullTls(); // the alert still has to reach the peer
        return;
      }
      if (tls_.handshakeDone() && !handshakeDoneAt_)
      {
        handshakeDoneAt_ = nowMs;
      }
    }
    Bytes app = tls_.readApp();
    if (!app.empty())
    {
      appIn_.insert(appIn_.end(), app.begin(), app.end());
    }
    pullTls();
  }

  void pullTls()
  {
    Bytes out = tls_.takeOutbound();
    if (!out.empty())
    {
      sender_.queue(out, !tls_.handshakeDone());
    }
  }

  Packet makePacket(bool handshakePhase)
  {
    Packet p;
    p.dcid = dcid_;
    p.packetNumber = nextPacketNumber_++;
    if (handshakePhase || !tls_.handshakeDone())
    {
      p.type = PacketType::Initial;
      p.version = version_;
      p.scid = scid_;
      p.token = token_;
    }
    else
    {
      p.type = PacketType::Short;
    }
    return p;
  }

  void flush(std::uint64_t nowMs)
  {
    for (auto &seg : sender_.segs)
    {
      if (seg.sentOnce)
      {
        continue;
      }
      Packet p = makePacket(seg.handshakePhase);
      if (ackDirty_)
      {
        p.frames.push_back(AckFrame{receiver_.cum});
        ackDirty_ = false;
      }
      p.frames.push_back(CarrierFrame{seg.off, seg.data});
      seg.sentOnce = true;
      seg.sentAt = nowMs;
      if (seg.txCount == 0)
      {
        seg.backoffMs = sender_.rtoMs;
      }
      seg.resendAt = nowMs + seg.backoffMs;
      seg.txCount += 1;
      emitPacket(p, seg.handshakePhase);
    }
    if (ackDirty_)
    {
      bool hs = !tls_.handshakeDone();
      Packet p = makePacket(hs);
      p.frames.push_back(AckFrame{receiver_.cum});
      ackDirty_ = false;
      emitPacket(p, hs);
    }
  }

  void emitPacket(Packet &p, bool handshakePhase)
  {
    if (p.type == PacketType::Initial)
    {
      // two-pass: measure, then pad the datagram to the floor
      Bytes probe = encodePacket(p);
      if (probe.size() < kMinInitialDatagram)
      {
        p.frames.push_back(PaddingFrame{kMinInitialDatagram - probe.size()});
      }
    }
    pushDatagram(encodePacket(p), handshakePhase);
  }

  void pushDatagram(Bytes datagram, bool handshakePhase)
  {
    meter_.out.count(handshakePhase ? net::MeterPhase::Handshake : net::MeterPhase::Application, datagram.size());
    outDatagrams_.push_back(std::move(datagram));
  }

  void meterIn(std::size_t n)
  {
    meter_.in.count(tls_.handshakeDone() ? net::MeterPhase::Application : net::MeterPhase::Handshake, n);
  }

  void fail(Errc code, const std::string &text)
  {
    failed_ = true;
    errorCode_ = code;
    errorText_ = text;
  }

  std::uint32_t version_;
  Bytes token_;
  tlsx::TlsEngine tls_;
  Bytes scid_;
  Bytes dcid_;
  std::uint32_t nextPacketNumber_ = 0;

  detail::CarrierSender sender_;
  detail::CarrierReceiver receiver_;
  bool ackDirty_ = false;
  bool sawServerPacket_ = false;
  bool earlyOffered_ = false;
  bool peerClosed_ = false;

  Bytes appIn_;
  std::optional<Bytes> receivedToken_;
  std::vector<std::uint32_t> offeredVersions_;
  std::optional<std::uint64_t> handshakeDoneAt_;

  bool failed_ = false;
  Errc errorCode_ = Errc::io_error;
  std::string errorText_;

  std::vector<Bytes> outDatagrams_;
  EngineMeter meter_;
};

/// Server side of one connection; the listener routes datagrams here and
/// answers unknown versions with a version negotiation packet itself.
class ServerEngine
{
public:
  using TokenValidator = std::function<bool(const Bytes &)>;

  struct Options
  {
    tlsx::TlsContext ctx;
    TokenValidator validateToken;
    std::uint64_t seed = 0;
  };

  ServerEngine(Options opts, std::uint64_t nowMs) : tls_(tlsx::TlsEngine::server(opts.ctx))
  {
    std::mt19937_64 rng(opts.seed ? opts.seed : 0xC0FFEE123456789ULL);
    scid_ = detail::randomCid(rng);
    validateToken_ = std::move(opts.validateToken);
    (void)nowMs;
  }

  void onDatagram(const Bytes &datagram, std::uint64_t nowMs)
  {
    ampReceived_ += datagram.size();
    meter_.in.count(tls_.handshakeDone() ? net::MeterPhase::Application : net::MeterPhase::Handshake,
                    datagram.size());
    std::vector<ParsedDatagram> parsed;
    try
    {
      parsed = decodeDatagram(datagram);
    }
    catch (const DxError &)
    {
      return;
    }
    for (auto &item : parsed)
    {
      auto *p = std::get_if<Packet>(&item);
      if (p == nullptr)
      {
        continue;
      }
      if (p->type == PacketType::Initial && !p->scid.empty())
      {
        peerCid_ = p->scid;
      }
      if (!validated_ && !p->token.empty() && validateToken_ && validateToken_(p->token))
      {
        validated_ = true;
      }
      for (auto &f : p->frames)
      {
        onFrame(f, nowMs);
      }
    }
    driveTls(nowMs);
  }

  std::vector<Bytes> takeDatagrams(std::uint64_t nowMs)
  {
    flush(nowMs);
    return std::exchange(outDatagrams_, {});
  }

  std::optional<std::uint64_t> nextTimerAt() const
  {
    return sender_.nextTimerAt();
  }

  void onTimer(std::uint64_t nowMs)
  {
    sender_.onTimer(nowMs);
  }

  bool handshakeDone() const
  {
    return tls_.handshakeDone();
  }

  /// Sim-clock instant at which the local handshake first completed.
  std::optional<std::uint64_t> handshakeDoneAt() const
  {
    return handshakeDoneAt_;
  }

  void writeApp(const Bytes &data, std::uint64_t nowMs)
  {
    tls_.writeApp(data);
    pullTls();
    (void)nowMs;
  }

  /// Server reply that rides the first flight, before the handshake ends.
  bool writeEarlyApp(const Bytes &data)
  {
    if (!tls_.tryWriteEarly(data))
    {
      return false;
    }
    pullTls();
    return true;
  }

  Bytes readApp()
  {
    return std::exchange(appIn_, {});
  }

  Bytes readEarlyApp()
  {
    return tls_.takeEarlyApp();
  }

  void issueToken(const Bytes &token)
  {
    pendingToken_ = token;
  }

  bool validated() const
  {
    return validated_;
  }

  bool sawEarlyData() const
  {
    return tls_.earlyDataAccepted();
  }

  bool resumedSession() const
  {
    return tls_.resumed();
  }

  std::string alpn() const
  {
    return tls_.alpn();
  }

  bool failed() const
  {
    return failed_;
  }

  bool peerClosed() const
  {
    return peerClosed_;
  }

  const EngineMeter &meter() const
  {
    return meter_;
  }

  std::uint64_t retransmissions() const
  {
    return sender_.retransmissions;
  }

private:
  void onFrame(const Frame &f, std::uint64_t nowMs)
  {
    if (const auto *ack = std::get_if<AckFrame>(&f))
    {
      if (ack->cumOffset > 0)
      {
        validated_ = true; // the peer provably received our bytes
      }
      sender_.onAck(ack->cumOffset, nowMs);
    }
    else if (const auto *c = std::get_if<CarrierFrame>(&f))
    {
      receiver_.onFrame(*c);
      ackDirty_ = true;
    }
    else if (std::get_if<CloseFrame>(&f))
    {
      peerClosed_ = true;
    }
  }

  void driveTls(std::uint64_t nowMs)
  {
    if (!receiver_.ready.empty())
    {
      tls_.feed(std::exchange(receiver_.ready, {}));
    }
    if (!tls_.handshakeDone())
    {
      auto st = tls_.drive();
      if (st == tlsx::HsStatus::Failed)
      {
        // Ship the alert and stop; touching readApp() on a failed session
        // would throw out of onDatagram before the caller can flush it.
        failed_ = true;
        pullTls();
        return;
      }
      if (st == tlsx::HsStatus::Done)
      {
        doneDirty_ = true;
        if (!handshakeDoneAt_)
        {
          handshakeDoneAt_ = nowMs;
        }
      }
    }
    Bytes app = tls_.readApp();
    if (!app.empty())
    {
      appIn_.insert(appIn_.end(), app.begin(), app.end());
    }
    pullTls();
  }

  void pullTls()
  {
    Bytes out = tls_.takeOutbound();
    if (!out.empty())
    {
      sender_.queue(out, !tls_.handshakeDone());
    }
  }

  void flush(std::uint64_t nowMs)
  {
    for (auto &seg : sender_.segs)
    {
      if (seg.sentOnce)
      {
        continue;
      }
      Packet p = makePacket();
      bool takesAck = ackDirty_;
      bool takesDone = doneDirty_;
      bool takesToken = pendingToken_.has_value();
      if (takesAck)
      {
        p.frames.push_back(AckFrame{receiver_.cum});
      }
      if (takesDone)
      {
        p.frames.push_back(DoneFrame{});
      }
      if (takesToken)
      {
        p.frames.push_back(NewTokenFrame{*pendingToken_});
      }
      p.frames.push_back(CarrierFrame{seg.off, seg.data});
      Bytes wire = encodePacket(p);
      if (!budgetAllows(wire.size()))
      {
        // segment stays queued until the peer validates this address
        nextPacketNumber_ -= 1;
        break;
      }
      if (takesAck)
      {
        ackDirty_ = false;
      }
      if (takesDone)
      {
        doneDirty_ = false;
      }
      if (takesToken)
      {
        pendingToken_.reset();
      }
      seg.sentOnce = true;
      seg.sentAt = nowMs;
      if (seg.txCount == 0)
      {
        seg.backoffMs = sender_.rtoMs;
      }
      seg.resendAt = nowMs + seg.backoffMs;
      seg.txCount += 1;
      sendWire(std::move(wire), seg.handshakePhase);
    }
    if (ackDirty_ || doneDirty_ || pendingToken_)
    {
      Packet p = makePacket();
      if (ackDirty_)
      {
        p.frames.push_back(AckFrame{receiver_.cum});
      }
      if (doneDirty_)
      {
        p.frames.push_back(DoneFrame{});
      }
      if (pendingToken_)
      {
        p.frames.push_back(NewTokenFrame{*pendingToken_});
      }
      Bytes wire = encodePacket(p);
      if (budgetAllows(wire.size()))
      {
        ackDirty_ = false;
        doneDirty_ = false;
        pendingToken_.reset();
        sendWire(std::move(wire), !tls_.handshakeDone());
      }
      else
      {
        nextPacketNumber_ -= 1;
      }
    }
  }

  Packet makePacket()
  {
    Packet p;
    p.dcid = peerCid_;
    p.packetNumber = nextPacketNumber_++;
    if (!tls_.handshakeDone())
    {
      p.type = PacketType::Initial;
      p.version = kVersion;
      p.scid = scid_;
    }
    else
    {
      p.type = PacketType::Short;
    }
    return p;
  }

  bool budgetAllows(std::size_t datagramSize) const
  {
    if (validated_)
    {
      return true;
    }
    return ampSent_ + datagramSize <= 3 * ampReceived_;
  }

  void sendWire(Bytes wire, bool handshakePhase)
  {
    ampSent_ += wire.size();
    meter_.out.count(handshakePhase ? net::MeterPhase::Handshake : net::MeterPhase::Application, wire.size());
    outDatagrams_.push_back(std::move(wire));
  }

  tlsx::TlsEngine tls_;
  TokenValidator validateToken_;
  Bytes scid_;
  Bytes peerCid_;
  std::uint32_t nextPacketNumber_ = 0;

  detail::CarrierSender sender_;
  detail::CarrierReceiver receiver_;
  bool ackDirty_ = false;
  bool doneDirty_ = false;
  std::optional<Bytes> pendingToken_;

  bool validated_ = false;
  std::uint64_t ampReceived_ = 0;
  std::uint64_t ampSent_ = 0;

  Bytes appIn_;
  bool failed_ = false;
  bool peerClosed_ = false;
  std::optional<std::uint64_t> handshakeDoneAt_;

  std::vector<Bytes> outDatagrams_;
  EngineMeter meter_;
};

} // namespace doxbench::quicish
