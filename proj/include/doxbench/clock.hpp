// Copyright 2026 The doxbench Authors
// SPDX-License-Identifier: Apache-2.0

/// \file clock.hpp
/// \brief Monotonic/wall clock abstraction. Durations are measured on the
/// monotonic clock; wall time is only used for record timestamps and ticket
/// expiry arithmetic. FakeClock lets tests advance time past ticket lifetimes.

#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <memory>
#include <string>

namespace doxbench
{

using SteadyTime = std::chrono::steady_clock::time_point;
using Millis = std::chrono::milliseconds;

/// \brief Clock interface: steady time for durations, wall seconds for stamps.
class Clock
{
public:
  virtual ~Clock() = default;
  virtual SteadyTime steadyNow() const = 0;
  virtual std::int64_t wallSeconds() const = 0;
};

class SystemClock final : public Clock
{
public:
  SteadyTime steadyNow() const override { return std::chrono::steady_clock::now(); }

  std::int64_t wallSeconds() const override
  {
    return std::chrono::duration_cast<std::chrono::seconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
  }

  static SystemClock &instance()
  {
    static SystemClock clk;
    return clk;
  }
};

/// \brief Manually advanced clock for expiry tests.
class FakeClock final : public Clock
{
public:
  explicit FakeClock(std::int64_t startWallSeconds = 1'700'000'000)
    : wall_(startWallSeconds), steady_(std::chrono::steady_clock::now())
  {
  }

  SteadyTime steadyNow() const override
  {
    return steady_ + std::chrono::seconds(wall_.load() - base_);
  }

  std::int64_t wallSeconds() const override { return wall_.load(); }

  void advanceSeconds(std::int64_t s) { wall_ += s; }

private:
  std::atomic<std::int64_t> wall_;
  std::int64_t base_ = wall_.load();
  SteadyTime steady_;
};

inline double elapsedMs(SteadyTime from, SteadyTime to)
{
  return std::chrono::duration<double, std::milli>(to - from).count();
}

/// \brief ISO-8601 UTC timestamp for record rows.
inline std::string utcTimestamp(std::int64_t wallSeconds)
{
  std::time_t t = static_cast<std::time_t>(wallSeconds);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

} // namespace doxbench
