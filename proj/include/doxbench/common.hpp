// Copyright 2026 The doxbench Authors
// SPDX-License-Identifier: Apache-2.0

/// \file common.hpp
/// \brief Error codes, the doxbench exception type, and small shared helpers.

#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace doxbench
{

using Bytes = std::vector<std::uint8_t>;

/// \brief Stable error codes used across the suite.
///
/// Measurement operations report these as record fields; configuration and
/// I/O problems surface as thrown DxError.
enum class Errc
{
  none = 0,

  // codec
  invalid_name,
  truncated_input,
  malformed_compression_pointer,
  oversize_payload,
  incomplete_frame,

  // network / transports
  timeout,
  connect_timeout,
  connection_refused,
  reset,
  network_unreachable,
  malformed_response,
  tls_failure,
  alpn_mismatch,
  http_status_error,
  version_negotiation_required,
  warm_failed,
  early_data_rejected,

  // discovery / orchestration
  blocklisted,
  bind_failure,
  config_invalid,
  sink_io_error,
  io_error,

  // analysis
  schema_mismatch,
  unknown_metric,
  missing_baseline,
  zero_baseline,
  data_empty,
};

inline const char *errcName(Errc e)
{
  switch (e)
  {
    case Errc::none: return "none";
    case Errc::invalid_name: return "invalid-name";
    case Errc::truncated_input: return "truncated-input";
    case Errc::malformed_compression_pointer: return "malformed-compression-pointer";
    case Errc::oversize_payload: return "oversize-payload";
    case Errc::incomplete_frame: return "incomplete-frame";
    case Errc::timeout: return "timeout";
    case Errc::connect_timeout: return "connect-timeout";
    case Errc::connection_refused: return "connection-refused";
    case Errc::reset: return "reset";
    case Errc::network_unreachable: return "network-unreachable";
    case Errc::malformed_response: return "malformed-response";
    case Errc::tls_failure: return "tls-failure";
    case Errc::alpn_mismatch: return "alpn-mismatch";
    case Errc::http_status_error: return "http-status-error";
    case Errc::version_negotiation_required: return "version-negotiation-required";
    case Errc::warm_failed: return "warm-failed";
    case Errc::early_data_rejected: return "early-data-rejected";
    case Errc::blocklisted: return "blocklisted";
    case Errc::bind_failure: return "bind-failure";
    case Errc::config_invalid: return "config-invalid";
    case Errc::sink_io_error: return "sink-io-error";
    case Errc::io_error: return "io-error";
    case Errc::schema_mismatch: return "schema-mismatch";
    case Errc::unknown_metric: return "unknown-metric";
    case Errc::missing_baseline: return "missing-baseline";
    case Errc::zero_baseline: return "zero-baseline";
    case Errc::data_empty: return "data-empty";
  }
  return "unknown";
}

/// \brief Exception carrying an Errc plus a human-readable detail string.
class DxError : public std::runtime_error
{
public:
  DxError(Errc code, const std::string &detail)
    : std::runtime_error(std::string(errcName(code)) + ": " + detail), code_(code)
  {
  }

  explicit DxError(Errc code) : std::runtime_error(errcName(code)), code_(code) {}

  Errc code() const { return code_; }

private:
  Errc code_;
};

inline std::string toLower(std::string_view s)
{
  std::string out(s);
  for (auto &c : out)
  {
    if (c >= 'A' && c <= 'Z')
    {
      c = static_cast<char>(c - 'A' + 'a');
    }
  }
  return out;
}

/// \brief URL-safe base64 without padding (RFC 4648 §5), as used by the
/// GET variant of DNS-over-HTTPS.
inline std::string base64UrlEncode(const Bytes &data)
{
  static const char *alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-_";
  std::string out;
  out.reserve((data.size() * 4 + 2) / 3);
  std::size_t i = 0;
  while (i + 3 <= data.size())
  {
    std::uint32_t v = static_cast<std::uint32_t>(data[i]) << 16 |
                      static_cast<std::uint32_t>(data[i + 1]) << 8 | data[i + 2];
    out.push_back(alphabet[(v >> 18) & 63]);
    out.push_back(alphabet[(v >> 12) & 63]);
    out.push_back(alphabet[(v >> 6) & 63]);
    out.push_back(alphabet[v & 63]);
    i += 3;
  }
  std::size_t rest = data.size() - i;
  if (rest == 1)
  {
    std::uint32_t v = static_cast<std::uint32_t>(data[i]) << 16;
    out.push_back(alphabet[(v >> 18) & 63]);
    out.push_back(alphabet[(v >> 12) & 63]);
  }
  else if (rest == 2)
  {
    std::uint32_t v = static_cast<std::uint32_t>(data[i]) << 16 |
                      static_cast<std::uint32_t>(data[i + 1]) << 8;
    out.push_back(alphabet[(v >> 18) & 63]);
    out.push_back(alphabet[(v >> 12) & 63]);
    out.push_back(alphabet[(v >> 6) & 63]);
  }
  return out;
}

inline std::optional<Bytes> base64UrlDecode(std::string_view text)
{
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '-') return 62;
    if (c == '_') return 63;
    return -1;
  };
  if (text.size() % 4 == 1)
  {
    return std::nullopt;
  }
  Bytes out;
  out.reserve(text.size() * 3 / 4);
  std::uint32_t acc = 0;
  int bits = 0;
  for (char c : text)
  {
    int v = value(c);
    if (v < 0)
    {
      return std::nullopt;
    }
    acc = acc << 6 | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8)
    {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xff));
    }
  }
  return out;
}

} // namespace doxbench
