// Copyright 2026 The doxbench Authors
// SPDX-License-Identifier: Apache-2.0

/// \file context.hpp
/// \brief SSL_CTX builders for the suite's client and server roles.
///
/// Clients verify the peer against a caller-supplied trust anchor (the mock
/// hands out its own certificate), capture session tickets through a
/// per-connection sink, and offer ALPN lists in caller order. Servers apply
/// their own ALPN preference, control ticket issuance and lifetime, and can
/// cap the protocol at TLS 1.2 or accept early data.

#pragma once

#include <openssl/ssl.h>
#include <openssl/x509v3.h>

#include <algorithm>
#include <cstring>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "doxbench/common.hpp"
#include "doxbench/tlsx/cert.hpp"

namespace doxbench::tlsx
{

/// RFC 8446 upper bound on ticket lifetime: seven days.
constexpr std::uint32_t kMaxTicketLifetimeSeconds = 604800;

struct ServerTlsOptions
{
  std::string certPem;
  std::string keyPem;
  std::vector<std::string> alpn; // server preference order; empty accepts anything
  bool requireAlpn = false;
  int numTickets = 2;
  std::uint32_t ticketLifetimeSeconds = 7200;
  std::uint32_t maxEarlyDataBytes = 0;
  bool forceTls12 = false;
};

struct ClientTlsOptions
{
  std::string trustPem;
  std::vector<std::string> alpn;
  bool verifyPeer = true;
  bool forceTls12 = false;
};

/// Serialized resumption state as captured from a NewSessionTicket.
struct TicketData
{
  Bytes serialized;
  std::uint32_t lifetimeSeconds = 0;
  std::uint32_t maxEarlyDataBytes = 0;
};

using TicketSink = std::function<void(TicketData)>;

namespace detail
{

inline Bytes alpnWireFormat(const std::vector<std::string> &protocols)
{
  Bytes wire;
  for (const auto &p : protocols)
  {
    wire.push_back(static_cast<std::uint8_t>(p.size()));
    wire.insert(wire.end(), p.begin(), p.end());
  }
  return wire;
}

inline int ticketSinkExIndex()
{
  static int index = SSL_get_ex_new_index(0, nullptr, nullptr, nullptr, nullptr);
  return index;
}

inline int newSessionCallback(SSL *ssl, SSL_SESSION *session)
{
  auto *sink = static_cast<TicketSink *>(SSL_get_ex_data(ssl, ticketSinkExIndex()));
  if (sink != nullptr && *sink)
  {
    TicketData data;
    int len = i2d_SSL_SESSION(session, nullptr);
    if (len > 0)
    {
      data.serialized.resize(static_cast<std::size_t>(len));
      unsigned char *p = data.serialized.data();
      i2d_SSL_SESSION(session, &p);
      data.lifetimeSeconds = static_cast<std::uint32_t>(SSL_SESSION_get_ticket_lifetime_hint(session));
      data.maxEarlyDataBytes = SSL_SESSION_get_max_early_data(session);
      (*sink)(std::move(data));
    }
  }
  return 0; // we keep no reference
}

struct CtxHolder
{
  SSL_CTX *ctx = nullptr;
  Bytes serverAlpnWire;
  bool requireAlpn = false;

  ~CtxHolder()
  {
    if (ctx != nullptr)
    {
      SSL_CTX_free(ctx);
    }
  }
};

inline int alpnSelectCallback(SSL *, const unsigned char **out, unsigned char *outlen, const unsigned char *in,
                              unsigned int inlen, void *arg)
{
  auto *holder = static_cast<CtxHolder *>(arg);
  if (holder->serverAlpnWire.empty())
  {
    return SSL_TLSEXT_ERR_NOACK;
  }
  unsigned char *selected = nullptr;
  unsigned char selectedLen = 0;
  int rc = SSL_select_next_proto(&selected, &selectedLen, holder->serverAlpnWire.data(),
                                 static_cast<unsigned int>(holder->serverAlpnWire.size()), in, inlen);
  if (rc == OPENSSL_NPN_NEGOTIATED)
  {
    *out = selected;
    *outlen = selectedLen;
    return SSL_TLSEXT_ERR_OK;
  }
  return holder->requireAlpn ? SSL_TLSEXT_ERR_ALERT_FATAL : SSL_TLSEXT_ERR_NOACK;
}

inline X509Ptr parseCertPem(const std::string &pem)
{
  BIO *bio = BIO_new_mem_buf(pem.data(), static_cast<int>(pem.size()));
  X509 *cert = PEM_read_bio_X509(bio, nullptr, nullptr, nullptr);
  BIO_free(bio);
  if (cert == nullptr)
  {
    throwOpenSsl("parse certificate PEM");
  }
  return X509Ptr(cert);
}

inline EvpPkeyPtr parseKeyPem(const std::string &pem)
{
  BIO *bio = BIO_new_mem_buf(pem.data(), static_cast<int>(pem.size()));
  EVP_PKEY *key = PEM_read_bio_PrivateKey(bio, nullptr, nullptr, nullptr);
  BIO_free(bio);
  if (key == nullptr)
  {
    throwOpenSsl("parse key PEM");
  }
  return EvpPkeyPtr(key);
}

} // namespace detail

class TlsContext
{
public:
  static TlsContext server(const ServerTlsOptions &opts)
  {
    auto holder = std::make_shared<detail::CtxHolder>();
    holder->ctx = SSL_CTX_new(TLS_server_method());
    if (holder->ctx == nullptr)
    {
      throwOpenSsl("SSL_CTX_new server");
    }
    SSL_CTX *ctx = holder->ctx;
    SSL_CTX_set_min_proto_version(ctx, TLS1_2_VERSION);
    if (opts.forceTls12)
    {
      SSL_CTX_set_max_proto_version(ctx, TLS1_2_VERSION);
    }

    auto cert = detail::parseCertPem(opts.certPem);
    auto key = detail::parseKeyPem(opts.keyPem);
    if (SSL_CTX_use_certificate(ctx, cert.get()) != 1 || SSL_CTX_use_PrivateKey(ctx, key.get()) != 1)
    {
      throwOpenSsl("install certificate");
    }

    holder->serverAlpnWire = detail::alpnWireFormat(opts.alpn);
    holder->requireAlpn = opts.requireAlpn;
    if (!holder->serverAlpnWire.empty() || opts.requireAlpn)
    {
      SSL_CTX_set_alpn_select_cb(ctx, detail::alpnSelectCallback, holder.get());
    }

    static const unsigned char sidCtx[] = "doxbench";
    SSL_CTX_set_session_id_context(ctx, sidCtx, sizeof(sidCtx) - 1);
    SSL_CTX_set_num_tickets(ctx, static_cast<std::size_t>(opts.numTickets));
    std::uint32_t lifetime = std::min(opts.ticketLifetimeSeconds, kMaxTicketLifetimeSeconds);
    SSL_CTX_set_timeout(ctx, static_cast<long>(lifetime));
    if (opts.maxEarlyDataBytes > 0)
    {
      SSL_CTX_set_max_early_data(ctx, opts.maxEarlyDataBytes);
      // Each mock connection is stateless from the client's point of view;
      // replay protection would make repeated 0-RTT rounds flaky.
      SSL_CTX_set_options(ctx, SSL_OP_NO_ANTI_REPLAY);
    }
    return TlsContext(std::move(holder));
  }

  static TlsContext client(const ClientTlsOptions &opts)
  {
    auto holder = std::make_shared<detail::CtxHolder>();
    holder->ctx = SSL_CTX_new(TLS_client_method());
    if (holder->ctx == nullptr)
    {
      throwOpenSsl("SSL_CTX_new client");
    }
    SSL_CTX *ctx = holder->ctx;
    SSL_CTX_set_min_proto_version(ctx, TLS1_2_VERSION);
    if (opts.forceTls12)
    {
      SSL_CTX_set_max_proto_version(ctx, TLS1_2_VERSION);
    }

    if (opts.verifyPeer)
    {
      SSL_CTX_set_verify(ctx, SSL_VERIFY_PEER, nullptr);
      if (!opts.trustPem.empty())
      {
        auto anchor = detail::parseCertPem(opts.trustPem);
        X509_STORE *store = SSL_CTX_get_cert_store(ctx);
        X509_STORE_add_cert(store, anchor.get());
      }
    }
    else
    {
      SSL_CTX_set_verify(ctx, SSL_VERIFY_NONE, nullptr);
    }

    if (!opts.alpn.empty())
    {
      Bytes wire = detail::alpnWireFormat(opts.alpn);
      SSL_CTX_set_alpn_protos(ctx, wire.data(), static_cast<unsigned int>(wire.size()));
    }

    SSL_CTX_set_session_cache_mode(ctx, SSL_SESS_CACHE_CLIENT | SSL_SESS_CACHE_NO_INTERNAL_STORE);
    SSL_CTX_sess_set_new_cb(ctx, detail::newSessionCallback);
    return TlsContext(std::move(holder));
  }

  SSL_CTX *get() const
  {
    return holder_->ctx;
  }

private:
  explicit TlsContext(std::shared_ptr<detail::CtxHolder> holder) : holder_(std::move(holder)) {}

  std::shared_ptr<detail::CtxHolder> holder_;
};

} // namespace doxbench::tlsx
