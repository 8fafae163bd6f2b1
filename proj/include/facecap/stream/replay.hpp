#pragma once

// Simulated sensors: turns a RawSequence into a timed packet schedule with
// injected faults and sends it over UDP.
//
// Sync pulse k of every sensor marks host time k * sync_period_us (a shared
// pulse-per-period reference). Its device timestamp is that host time mapped
// through the sensor's clock fault.

#include <cstddef>
#include <cstdint>
#include <map>
#include <vector>

#include "facecap/imu.hpp"
#include "facecap/stream/packet.hpp"
#include "facecap/stream/udp.hpp"

namespace facecap::stream {

inline constexpr double kDefaultSyncPeriodUs = 500'000.0;

struct ClockFault {
  double offset_us = 0.0;
  double drift_ppm = 0.0;
};

struct FaultConfig {
  double jitter_us = 0.0;      // uniform +-jitter on device timestamps
  double drop_fraction = 0.0;  // probability of dropping each data packet
  std::map<std::size_t, ClockFault> clocks;  // per sensor id
  std::uint64_t seed = 0;
};

struct ReplayOptions {
  double sync_period_us = kDefaultSyncPeriodUs;
  /// Playback speed relative to real time; 0 sends in bursts paced below.
  double speed = 0.0;
  /// When speed = 0: sleep `burst_pause_us` after every `burst_size`
  /// datagrams so a receiver on the same host keeps up.
  std::size_t burst_size = 16;
  double burst_pause_us = 200.0;
};

struct ScheduledPacket {
  double send_time_us = 0.0;  // host time of emission
  SensorPacket packet;
};

struct ReplayPlan {
  std::vector<ScheduledPacket> packets;  // sorted by send time
  std::size_t dropped = 0;
  std::size_t sync_pulses = 0;  // pulse indices; each is sent by every sensor
};

/// Pure and deterministic given the fault seed.
ReplayPlan plan_replay(const RawSequence& raw, const FaultConfig& faults,
                       const ReplayOptions& options = {});

struct ReplayStats {
  std::size_t sent = 0;
  std::size_t dropped = 0;
  std::size_t sync_pulses = 0;
};

/// Sends the plan to `destination`. Throws SocketError.
ReplayStats replay(const RawSequence& raw, const Endpoint& destination, const FaultConfig& faults,
                   const ReplayOptions& options = {});

}  // namespace facecap::stream
