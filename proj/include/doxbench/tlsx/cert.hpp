// Copyright 2026 The doxbench Authors
// SPDX-License-Identifier: Apache-2.0

/// \file cert.hpp
/// \brief Self-signed certificate generation for the mock resolver.
///
/// Certificates carry a SAN for 127.0.0.1 so clients can verify by IP. The
/// optional padding parameter inflates the certificate with an nsComment
/// extension; that is how tests steer the size of the server's first flight
/// (for example past a client's anti-amplification allowance).

#pragma once

#include <openssl/err.h>
#include <openssl/evp.h>
#include <openssl/pem.h>
#include <openssl/x509v3.h>

#include <atomic>
#include <memory>
#include <string>

#include "doxbench/common.hpp"

namespace doxbench::tlsx
{

struct EvpPkeyDeleter
{
  void operator()(EVP_PKEY *p) const
  {
    EVP_PKEY_free(p);
  }
};

struct X509Deleter
{
  void operator()(X509 *p) const
  {
    X509_free(p);
  }
};

using EvpPkeyPtr = std::unique_ptr<EVP_PKEY, EvpPkeyDeleter>;
using X509Ptr = std::unique_ptr<X509, X509Deleter>;

[[noreturn]] inline void throwOpenSsl(const std::string &what)
{
  unsigned long err = ERR_get_error();
  char buf[256] = "unknown";
  if (err != 0)
  {
    ERR_error_string_n(err, buf, sizeof(buf));
  }
  throw DxError(Errc::tls_failure, what + ": " + buf);
}

inline EvpPkeyPtr generateP256Key()
{
  EVP_PKEY *key = EVP_PKEY_Q_keygen(nullptr, nullptr, "EC", "P-256");
  if (key == nullptr)
  {
    throwOpenSsl("EC keygen");
  }
  return EvpPkeyPtr(key);
}

struct CertMaterial
{
  std::string certPem;
  std::string keyPem;
  std::size_t certDerBytes = 0;
};

namespace detail
{

inline void addExtension(X509 *cert, int nid, const std::string &value)
{
  X509V3_CTX ctx;
  X509V3_set_ctx_nodb(&ctx);
  X509V3_set_ctx(&ctx, cert, cert, nullptr, nullptr, 0);
  X509_EXTENSION *ext = X509V3_EXT_conf_nid(nullptr, &ctx, nid, value.c_str());
  if (ext == nullptr)
  {
    throwOpenSsl("extension " + std::to_string(nid));
  }
  X509_add_ext(cert, ext, -1);
  X509_EXTENSION_free(ext);
}

inline std::string bioToString(BIO *bio)
{
  char *data = nullptr;
  long len = BIO_get_mem_data(bio, &data);
  return std::string(data, static_cast<std::size_t>(len));
}

} // namespace detail

/// Generates a fresh self-signed server certificate for `commonName`,
/// valid for 127.0.0.1, padded with roughly `paddingBytes` of extension
/// content.
inline CertMaterial makeSelfSignedCert(const std::string &commonName, std::size_t paddingBytes = 0)
{
  EvpPkeyPtr key = generateP256Key();
  X509Ptr cert(X509_new());
  if (!cert)
  {
    throwOpenSsl("X509_new");
  }

  static std::atomic<long> serial{1};
  ASN1_INTEGER_set(X509_get_serialNumber(cert.get()), serial.fetch_add(1));
  X509_gmtime_adj(X509_getm_notBefore(cert.get()), -3600);
  X509_gmtime_adj(X509_getm_notAfter(cert.get()), 60L * 60 * 24 * 30);
  X509_set_pubkey(cert.get(), key.get());

  X509_NAME *name = X509_get_subject_name(cert.get());
  X509_NAME_add_entry_by_txt(name, "CN", MBSTRING_ASC,
                             reinterpret_cast<const unsigned char *>(commonName.c_str()), -1, -1, 0);
  X509_set_issuer_name(cert.get(), name);

  detail::addExtension(cert.get(), NID_subject_alt_name, "IP:127.0.0.1,DNS:" + commonName);
  detail::addExtension(cert.get(), NID_basic_constraints, "critical,CA:TRUE");
  if (paddingBytes > 0)
  {
    detail::addExtension(cert.get(), NID_netscape_comment, std::string(paddingBytes, 'x'));
  }

  if (X509_sign(cert.get(), key.get(), EVP_sha256()) == 0)
  {
    throwOpenSsl("X509_sign");
  }

  CertMaterial out;
  out.certDerBytes = static_cast<std::size_t>(i2d_X509(cert.get(), nullptr));

  BIO *bio = BIO_new(BIO_s_mem());
  PEM_write_bio_X509(bio, cert.get());
  out.certPem = detail::bioToString(bio);
  BIO_free(bio);

  bio = BIO_new(BIO_s_mem());
  PEM_write_bio_PrivateKey(bio, key.get(), nullptr, nullptr, 0, nullptr, nullptr);
  out.keyPem = detail::bioToString(bio);
  BIO_free(bio);

  return out;
}

} // namespace doxbench::tlsx
