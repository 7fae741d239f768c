// Copyright 2026 The doxbench Authors
// SPDX-License-Identifier: Apache-2.0

/// \file engine.hpp
/// \brief Non-blocking TLS endpoint over memory BIOs.
///
/// The engine never touches a socket: ciphertext moves through feed() and
/// takeOutbound(), so the same machine drives kernel TCP, the emulated
/// stream, and the QUIC-style transport. drive() advances the handshake,
/// including server-side early-data acceptance; tryWriteEarly() lets a
/// client attach 0-RTT data to its first flight and a server reply before
/// the handshake finishes.

#pragma once

#include <openssl/ssl.h>

#include <optional>
#include <string>
#include <utility>

#include "doxbench/common.hpp"
#include "doxbench/expectation.hpp"
#include "doxbench/tlsx/context.hpp"

namespace doxbench::tlsx
{

enum class HsStatus
{
  InProgress,
  Done,
  Failed,
};

class TlsEngine
{
public:
  struct ClientOptions
  {
    std::string sniName;
    std::string verifyIp; // when set, the peer certificate must cover this IP
    std::optional<TicketData> resume;
    TicketSink ticketSink;
  };

  static TlsEngine client(const TlsContext &ctx, ClientOptions opts)
  {
    TlsEngine e(ctx, true);
    SSL_set_connect_state(e.ssl_);
    if (!opts.sniName.empty())
    {
      SSL_set_tlsext_host_name(e.ssl_, opts.sniName.c_str());
    }
    if (!opts.verifyIp.empty())
    {
      X509_VERIFY_PARAM_set1_ip_asc(SSL_get0_param(e.ssl_), opts.verifyIp.c_str());
    }
    else if (!opts.sniName.empty())
    {
      X509_VERIFY_PARAM_set1_host(SSL_get0_param(e.ssl_), opts.sniName.c_str(), 0);
    }
    if (opts.resume)
    {
      const unsigned char *p = opts.resume->serialized.data();
      SSL_SESSION *session = d2i_SSL_SESSION(nullptr, &p, static_cast<long>(opts.resume->serialized.size()));
      if (session != nullptr)
      {
        SSL_set_session(e.ssl_, session);
        SSL_SESSION_free(session);
      }
    }
    if (opts.ticketSink)
    {
      e.sink_ = new TicketSink(std::move(opts.ticketSink));
      SSL_set_ex_data(e.ssl_, detail::ticketSinkExIndex(), e.sink_);
    }
    return e;
  }

  static TlsEngine server(const TlsContext &ctx)
  {
    TlsEngine e(ctx, false);
    SSL_set_accept_state(e.ssl_);
    if (SSL_get_max_early_data(e.ssl_) > 0)
    {
      e.state_ = State::EarlyRead;
    }
    return e;
  }

  TlsEngine(TlsEngine &&other) noexcept : ctx_(other.ctx_)
  {
    moveFrom(other);
  }

  TlsEngine &operator=(TlsEngine &&other) noexcept
  {
    if (this != &other)
    {
      release();
      moveFrom(other);
    }
    return *this;
  }

  TlsEngine(const TlsEngine &) = delete;
  TlsEngine &operator=(const TlsEngine &) = delete;

  ~TlsEngine()
  {
    release();
  }

  /// Ciphertext from the peer.
  void feed(const Bytes &data)
  {
    if (!data.empty())
    {
      BIO_write(rbio_, data.data(), static_cast<int>(data.size()));
    }
  }

  /// Ciphertext for the peer.
  Bytes takeOutbound()
  {
    Bytes out;
    char buf[4096];
    for (;;)
    {
      int n = BIO_read(wbio_, buf, sizeof(buf));
      if (n <= 0)
      {
        break;
      }
      out.insert(out.end(), buf, buf + n);
    }
    return out;
  }

  /// Advances the handshake as far as the buffered ciphertext allows.
  HsStatus drive()
  {
    if (state_ == State::Done)
    {
      return HsStatus::Done;
    }
    if (state_ == State::Failed)
    {
      return HsStatus::Failed;
    }
    if (state_ == State::EarlyRead)
    {
      char buf[4096];
      for (;;)
      {
        std::size_t n = 0;
        int rc = SSL_read_early_data(ssl_, buf, sizeof(buf), &n);
        if (rc == SSL_READ_EARLY_DATA_SUCCESS)
        {
          earlyApp_.insert(earlyApp_.end(), buf, buf + n);
          sawEarlyData_ = true;
          continue;
        }
        if (rc == SSL_READ_EARLY_DATA_FINISH)
        {
          state_ = State::Handshaking;
          break;
        }
        int err = SSL_get_error(ssl_, 0);
        if (err == SSL_ERROR_WANT_READ || err == SSL_ERROR_WANT_WRITE)
        {
          return HsStatus::InProgress;
        }
        return fail();
      }
    }
    int rc = SSL_do_handshake(ssl_);
    if (rc == 1)
    {
      state_ = State::Done;
      return HsStatus::Done;
    }
    int err = SSL_get_error(ssl_, rc);
    if (err == SSL_ERROR_WANT_READ || err == SSL_ERROR_WANT_WRITE)
    {
      return HsStatus::InProgress;
    }
    return fail();
  }

  bool handshakeDone() const
  {
    return state_ == State::Done;
  }

  /// Client: attaches application bytes to the first flight as 0-RTT data.
  /// Server: replies before its handshake completes (rides the first
  /// server flight). Returns false when the peer or session does not allow
  /// early data.
  bool tryWriteEarly(const Bytes &data)
  {
    std::size_t off = 0;
    while (off < data.size())
    {
      std::size_t written = 0;
      int rc = SSL_write_early_data(ssl_, data.data() + off, data.size() - off, &written);
      if (rc != 1)
      {
        int err = SSL_get_error(ssl_, 0);
        if (err == SSL_ERROR_WANT_READ || err == SSL_ERROR_WANT_WRITE)
        {
          return off > 0;
        }
        return false;
      }
      off += written;
    }
    return true;
  }

  /// Plaintext to the peer; only valid once the handshake is done.
  void writeApp(const Bytes &data)
  {
    std::size_t off = 0;
    while (off < data.size())
    {
      int n = SSL_write(ssl_, data.data() + off, static_cast<int>(data.size() - off));
      if (n <= 0)
      {
        int err = SSL_get_error(ssl_, n);
        if (err == SSL_ERROR_WANT_READ || err == SSL_ERROR_WANT_WRITE)
        {
          continue;
        }
        throw DxError(failureCode(), "TLS write: " + lastError());
      }
      off += static_cast<std::size_t>(n);
    }
  }

  /// Drains buffered plaintext from the peer.
  Bytes readApp()
  {
    Bytes out;
    char buf[4096];
    for (;;)
    {
      int n = SSL_read(ssl_, buf, sizeof(buf));
      if (n > 0)
      {
        out.insert(out.end(), buf, buf + n);
        continue;
      }
      int err = SSL_get_error(ssl_, n);
      if (err == SSL_ERROR_ZERO_RETURN)
      {
        eof_ = true;
        break;
      }
      if (err == SSL_ERROR_WANT_READ || err == SSL_ERROR_WANT_WRITE)
      {
        break;
      }
      throw DxError(failureCode(), "TLS read: " + lastError());
    }
    return out;
  }

  /// Early application data collected while accepting (server side).
  Bytes takeEarlyApp()
  {
    return std::exchange(earlyApp_, {});
  }

  void sendCloseNotify()
  {
    SSL_shutdown(ssl_);
  }

  bool eof() const
  {
    return eof_;
  }

  bool resumed() const
  {
    return SSL_session_reused(ssl_) == 1;
  }

  bool earlyDataAccepted() const
  {
    if (client_)
    {
      return SSL_get_early_data_status(ssl_) == SSL_EARLY_DATA_ACCEPTED;
    }
    return sawEarlyData_;
  }

  TlsVersion version() const
  {
    int v = SSL_version(ssl_);
    if (v == TLS1_3_VERSION)
    {
      return TlsVersion::v1_3;
    }
    if (v == TLS1_2_VERSION)
    {
      return TlsVersion::v1_2;
    }
    return TlsVersion::none;
  }

  std::string alpn() const
  {
    const unsigned char *proto = nullptr;
    unsigned int len = 0;
    SSL_get0_alpn_selected(ssl_, &proto, &len);
    return proto != nullptr ? std::string(reinterpret_cast<const char *>(proto), len) : std::string();
  }

  std::string lastError() const
  {
    return lastError_;
  }

  Errc failureCode() const
  {
    return failureCode_;
  }

private:
  enum class State
  {
    EarlyRead,
    Handshaking,
    Done,
    Failed,
  };

  TlsEngine(const TlsContext &ctx, bool client) : ctx_(ctx), client_(client)
  {
    ssl_ = SSL_new(ctx.get());
    if (ssl_ == nullptr)
    {
      throwOpenSsl("SSL_new");
    }
    rbio_ = BIO_new(BIO_s_mem());
    wbio_ = BIO_new(BIO_s_mem());
    BIO_set_mem_eof_return(rbio_, -1);
    BIO_set_mem_eof_return(wbio_, -1);
    SSL_set_bio(ssl_, rbio_, wbio_);
  }

  HsStatus fail()
  {
    state_ = State::Failed;
    lastError_.clear();
    failureCode_ = Errc::tls_failure;
    unsigned long err = 0;
    char buf[256];
    while ((err = ERR_get_error()) != 0)
    {
      ERR_error_string_n(err, buf, sizeof(buf));
      if (!lastError_.empty())
      {
        lastError_ += "; ";
      }
      lastError_ += buf;
      int reason = ERR_GET_REASON(err);
      if (reason == SSL_R_NO_APPLICATION_PROTOCOL || reason == SSL_AD_NO_APPLICATION_PROTOCOL + SSL_AD_REASON_OFFSET)
      {
        failureCode_ = Errc::alpn_mismatch;
      }
    }
    if (lastError_.empty())
    {
      lastError_ = "handshake failed";
    }
    long verify = SSL_get_verify_result(ssl_);
    if (verify != X509_V_OK)
    {
      lastError_ += std::string("; verify: ") + X509_verify_cert_error_string(verify);
    }
    return HsStatus::Failed;
  }

  void moveFrom(TlsEngine &other)
  {
    ctx_ = other.ctx_;
    ssl_ = std::exchange(other.ssl_, nullptr);
    rbio_ = std::exchange(other.rbio_, nullptr);
    wbio_ = std::exchange(other.wbio_, nullptr);
    sink_ = std::exchange(other.sink_, nullptr);
    client_ = other.client_;
    state_ = other.state_;
    earlyApp_ = std::move(other.earlyApp_);
    sawEarlyData_ = other.sawEarlyData_;
    eof_ = other.eof_;
    lastError_ = std::move(other.lastError_);
    failureCode_ = other.failureCode_;
  }

  void release()
  {
    if (ssl_ != nullptr)
    {
      SSL_free(ssl_); // frees both BIOs
      ssl_ = nullptr;
    }
    delete sink_;
    sink_ = nullptr;
  }

  TlsContext ctx_;
  SSL *ssl_ = nullptr;
  BIO *rbio_ = nullptr;
  BIO *wbio_ = nullptr;
  TicketSink *sink_ = nullptr;
  bool client_ = false;
  State state_ = State::Handshaking;
  Bytes earlyApp_;
  bool sawEarlyData_ = false;
  bool eof_ = false;
  std::string lastError_;
  Errc failureCode_ = Errc::tls_failure;
};

} // namespace doxbench::tlsx
