// Copyright 2026 The doxbench Authors
// SPDX-License-Identifier: Apache-2.0

/// \file socket.hpp
/// \brief Thin RAII layer over BSD sockets: non-blocking UDP and TCP with
/// poll-based waits and deadline-aware connect. All errors surface as DxError
/// with a transport error code.

#pragma once

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <optional>
#include <string>
#include <utility>

#include "doxbench/common.hpp"

namespace doxbench::net
{

[[noreturn]] inline void throwErrno(Errc code, const std::string &what)
{
  throw DxError(code, what + ": " + std::strerror(errno));
}

/// Steady-clock deadline used to bound blocking loops.
class Deadline
{
public:
  static Deadline in(int ms)
  {
    Deadline d;
    d.at_ = std::chrono::steady_clock::now() + std::chrono::milliseconds(ms);
    return d;
  }

  static Deadline never()
  {
    Deadline d;
    d.at_ = std::chrono::steady_clock::time_point::max();
    return d;
  }

  int remainingMs() const
  {
    if (at_ == std::chrono::steady_clock::time_point::max())
    {
      return 3600 * 1000;
    }
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(at_ - std::chrono::steady_clock::now()).count();
    if (left < 0)
    {
      return 0;
    }
    if (left > 3600 * 1000)
    {
      return 3600 * 1000;
    }
    return static_cast<int>(left);
  }

  bool expired() const
  {
    return remainingMs() <= 0;
  }

private:
  std::chrono::steady_clock::time_point at_;
};

/// Move-only owner of a file descriptor.
class FdHandle
{
public:
  FdHandle() = default;

  explicit FdHandle(int fd) : fd_(fd) {}

  FdHandle(FdHandle &&other) noexcept : fd_(other.fd_)
  {
    other.fd_ = -1;
  }

  FdHandle &operator=(FdHandle &&other) noexcept
  {
    if (this != &other)
    {
      reset();
      fd_ = other.fd_;
      other.fd_ = -1;
    }
    return *this;
  }

  FdHandle(const FdHandle &) = delete;
  FdHandle &operator=(const FdHandle &) = delete;

  ~FdHandle()
  {
    reset();
  }

  void reset()
  {
    if (fd_ >= 0)
    {
      ::close(fd_);
      fd_ = -1;
    }
  }

  int get() const
  {
    return fd_;
  }

  bool valid() const
  {
    return fd_ >= 0;
  }

private:
  int fd_ = -1;
};

struct Endpoint
{
  std::string host;
  std::uint16_t port = 0;

  std::string str() const
  {
    return host + ":" + std::to_string(port);
  }
};

inline sockaddr_in makeAddr(const std::string &host, std::uint16_t port)
{
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
  {
    throw DxError(Errc::config_invalid, "not an IPv4 address: " + host);
  }
  return addr;
}

inline Endpoint fromAddr(const sockaddr_in &addr)
{
  char buf[INET_ADDRSTRLEN] = {};
  ::inet_ntop(AF_INET, &addr.sin_addr, buf, sizeof(buf));
  return Endpoint{buf, ntohs(addr.sin_port)};
}

inline void setNonBlocking(int fd)
{
  int flags = ::fcntl(fd, F_GETFL, 0);
  if (flags < 0 || ::fcntl(fd, F_SETFL, flags | O_NONBLOCK) < 0)
  {
    throwErrno(Errc::bind_failure, "fcntl");
  }
}

/// Waits for the requested poll events. Returns false on timeout.
inline bool pollFd(int fd, short events, int timeoutMs)
{
  pollfd p{};
  p.fd = fd;
  p.events = events;
  for (;;)
  {
    int rc = ::poll(&p, 1, timeoutMs);
    if (rc < 0)
    {
      if (errno == EINTR)
      {
        continue;
      }
      throwErrno(Errc::io_error, "poll");
    }
    return rc > 0;
  }
}

struct DatagramIn
{
  Bytes payload;
  Endpoint from;
};

/// Non-blocking IPv4 UDP socket.
class UdpSocket
{
public:
  UdpSocket() = default;

  static UdpSocket open()
  {
    UdpSocket s;
    int fd = ::socket(AF_INET, SOCK_DGRAM, 0);
    if (fd < 0)
    {
      throwErrno(Errc::bind_failure, "socket");
    }
    s.fd_ = FdHandle(fd);
    setNonBlocking(fd);
    return s;
  }

  static UdpSocket bind(const std::string &host, std::uint16_t port)
  {
    UdpSocket s = open();
    sockaddr_in addr = makeAddr(host, port);
    int on = 1;
    ::setsockopt(s.fd_.get(), SOL_SOCKET, SO_REUSEADDR, &on, sizeof(on));
    if (::bind(s.fd_.get(), reinterpret_cast<sockaddr *>(&addr), sizeof(addr)) < 0)
    {
      throwErrno(Errc::bind_failure, "bind " + host + ":" + std::to_string(port));
    }
    return s;
  }

  void sendTo(const Bytes &payload, const Endpoint &dest)
  {
    sockaddr_in addr = makeAddr(dest.host, dest.port);
    ssize_t n = ::sendto(fd_.get(), payload.data(), payload.size(), 0, reinterpret_cast<sockaddr *>(&addr),
                         sizeof(addr));
    if (n < 0)
    {
      if (errno == ECONNREFUSED)
      {
        throw DxError(Errc::connection_refused, "sendto " + dest.str());
      }
      throwErrno(Errc::io_error, "sendto " + dest.str());
    }
  }

  /// Non-blocking receive; std::nullopt when nothing is queued.
  std::optional<DatagramIn> tryRecv()
  {
    Bytes buf(65535);
    sockaddr_in from{};
    socklen_t fromLen = sizeof(from);
    ssize_t n = ::recvfrom(fd_.get(), buf.data(), buf.size(), 0, reinterpret_cast<sockaddr *>(&from), &fromLen);
    if (n < 0)
    {
      if (errno == EAGAIN || errno == EWOULDBLOCK)
      {
        return std::nullopt;
      }
      if (errno == ECONNREFUSED)
      {
        throw DxError(Errc::connection_refused, "recvfrom");
      }
      throwErrno(Errc::io_error, "recvfrom");
    }
    buf.resize(static_cast<std::size_t>(n));
    return DatagramIn{std::move(buf), fromAddr(from)};
  }

  bool waitReadable(int timeoutMs)
  {
    return pollFd(fd_.get(), POLLIN, timeoutMs);
  }

  std::uint16_t localPort() const
  {
    sockaddr_in addr{};
    socklen_t len = sizeof(addr);
    if (::getsockname(fd_.get(), reinterpret_cast<sockaddr *>(&addr), &len) < 0)
    {
      throwErrno(Errc::io_error, "getsockname");
    }
    return ntohs(addr.sin_port);
  }

  int fd() const
  {
    return fd_.get();
  }

private:
  FdHandle fd_;
};

/// Connected, non-blocking IPv4 TCP stream.
class TcpStream
{
public:
  TcpStream() = default;

  explicit TcpStream(FdHandle fd) : fd_(std::move(fd)) {}

  /// Non-blocking connect bounded by a deadline. Maps ECONNREFUSED and
  /// unreachable networks onto their transport error codes.
  static TcpStream connect(const Endpoint &dest, int timeoutMs)
  {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0)
    {
      throwErrno(Errc::bind_failure, "socket");
    }
    FdHandle handle(fd);
    setNonBlocking(fd);
    int on = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &on, sizeof(on));

    sockaddr_in addr = makeAddr(dest.host, dest.port);
    int rc = ::connect(fd, reinterpret_cast<sockaddr *>(&addr), sizeof(addr));
    if (rc < 0 && errno != EINPROGRESS)
    {
      mapConnectErrno(dest);
    }
    if (rc < 0)
    {
      if (!pollFd(fd, POLLOUT, timeoutMs))
      {
        throw DxError(Errc::connect_timeout, "connect " + dest.str());
      }
      int err = 0;
      socklen_t len = sizeof(err);
      ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
      if (err != 0)
      {
        errno = err;
        mapConnectErrno(dest);
      }
    }
    return TcpStream(std::move(handle));
  }

  /// Non-blocking read; nullopt when no data is ready, empty vector on EOF.
  std::optional<Bytes> tryRecv()
  {
    Bytes buf(65536);
    ssize_t n = ::recv(fd_.get(), buf.data(), buf.size(), 0);
    if (n < 0)
    {
      if (errno == EAGAIN || errno == EWOULDBLOCK)
      {
        return std::nullopt;
      }
      if (errno == ECONNRESET)
      {
        throw DxError(Errc::reset, "recv");
      }
      throwErrno(Errc::io_error, "recv");
    }
    buf.resize(static_cast<std::size_t>(n));
    return buf;
  }

  void sendAll(const Bytes &data, const Deadline &deadline)
  {
    std::size_t off = 0;
    while (off < data.size())
    {
      ssize_t n = ::send(fd_.get(), data.data() + off, data.size() - off, MSG_NOSIGNAL);
      if (n < 0)
      {
        if (errno == EAGAIN || errno == EWOULDBLOCK)
        {
          if (!pollFd(fd_.get(), POLLOUT, deadline.remainingMs()))
          {
            throw DxError(Errc::timeout, "send");
          }
          continue;
        }
        if (errno == ECONNRESET || errno == EPIPE)
        {
          throw DxError(Errc::reset, "send");
        }
        throwErrno(Errc::io_error, "send");
      }
      off += static_cast<std::size_t>(n);
    }
  }

  bool waitReadable(int timeoutMs)
  {
    return pollFd(fd_.get(), POLLIN, timeoutMs);
  }

  void shutdownWrite()
  {
    ::shutdown(fd_.get(), SHUT_WR);
  }

  int fd() const
  {
    return fd_.get();
  }

  bool valid() const
  {
    return fd_.valid();
  }

private:
  [[noreturn]] static void mapConnectErrno(const Endpoint &dest)
  {
    if (errno == ECONNREFUSED)
    {
      throw DxError(Errc::connection_refused, "connect " + dest.str());
    }
    if (errno == ENETUNREACH || errno == EHOSTUNREACH)
    {
      throw DxError(Errc::network_unreachable, "connect " + dest.str());
    }
    if (errno == ETIMEDOUT)
    {
      throw DxError(Errc::connect_timeout, "connect " + dest.str());
    }
    throwErrno(Errc::io_error, "connect " + dest.str());
  }

  FdHandle fd_;
};

/// Listening IPv4 TCP socket.
class TcpListener
{
public:
  static TcpListener bind(const std::string &host, std::uint16_t port)
  {
    TcpListener l;
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0)
    {
      throwErrno(Errc::bind_failure, "socket");
    }
    l.fd_ = FdHandle(fd);
    setNonBlocking(fd);
    int on = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &on, sizeof(on));
    sockaddr_in addr = makeAddr(host, port);
    if (::bind(fd, reinterpret_cast<sockaddr *>(&addr), sizeof(addr)) < 0)
    {
      throwErrno(Errc::bind_failure, "bind " + host + ":" + std::to_string(port));
    }
    if (::listen(fd, 64) < 0)
    {
      throwErrno(Errc::bind_failure, "listen");
    }
    return l;
  }

  std::optional<TcpStream> tryAccept()
  {
    sockaddr_in from{};
    socklen_t len = sizeof(from);
    int fd = ::accept(fd_.get(), reinterpret_cast<sockaddr *>(&from), &len);
    if (fd < 0)
    {
      if (errno == EAGAIN || errno == EWOULDBLOCK)
      {
        return std::nullopt;
      }
      throwErrno(Errc::io_error, "accept");
    }
    setNonBlocking(fd);
    int on = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &on, sizeof(on));
    return TcpStream(FdHandle(fd));
  }

  std::uint16_t localPort() const
  {
    sockaddr_in addr{};
    socklen_t len = sizeof(addr);
    if (::getsockname(fd_.get(), reinterpret_cast<sockaddr *>(&addr), &len) < 0)
    {
      throwErrno(Errc::io_error, "getsockname");
    }
    return ntohs(addr.sin_port);
  }

  int fd() const
  {
    return fd_.get();
  }

private:
  FdHandle fd_;
};

} // namespace doxbench::net
