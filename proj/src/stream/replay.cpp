#include "facecap/stream/replay.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <stdexcept>
#include <thread>

namespace facecap::stream {
namespace {

double device_clock(double host_us, const ClockFault& c) {
  return host_us * (1.0 + c.drift_ppm * 1e-6) + c.offset_us;
}

// Jitter near the start of the clock is clipped at zero; a fault that maps
// the sample itself below zero is rejected.
std::uint64_t to_device_us(double host_us, double jitter_us, const ClockFault& c) {
  if (device_clock(host_us, c) < 0.0) {
    throw std::invalid_argument("replay: clock fault yields a negative device time");
  }
  return static_cast<std::uint64_t>(std::llround(std::max(0.0, device_clock(host_us + jitter_us, c))));
}

}  // namespace

ReplayPlan plan_replay(const RawSequence& raw, const FaultConfig& faults,
                       const ReplayOptions& options) {
  raw.validate();
  if (faults.drop_fraction < 0.0 || faults.drop_fraction > 1.0) {
    throw std::invalid_argument("replay: drop fraction must lie in [0, 1]");
  }
  if (faults.jitter_us < 0.0) throw std::invalid_argument("replay: jitter must be non-negative");
  if (!(options.sync_period_us > 0.0)) {
    throw std::invalid_argument("replay: sync period must be positive");
  }
  ReplayPlan plan;
  if (raw.frames.empty()) return plan;

  std::mt19937_64 rng(faults.seed);
  std::uniform_real_distribution<double> jitter(-faults.jitter_us, faults.jitter_us);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t sensors = raw.sensor_count();
  auto fault_for = [&](std::size_t i) {
    const auto it = faults.clocks.find(i);
    return it == faults.clocks.end() ? ClockFault{} : it->second;
  };

  for (std::size_t j = 0; j < raw.frames.size(); ++j) {
    const ImuFrame& f = raw.frames[j];
    for (std::size_t i = 0; i < sensors; ++i) {
      // Draw both variates unconditionally so drops do not shift later jitter.
      const double jit = faults.jitter_us > 0.0 ? jitter(rng) : 0.0;
      const double u = unit(rng);
      if (u < faults.drop_fraction) {
        ++plan.dropped;
        continue;
      }
      const ImuSample& s = f.sensors[i];
      SensorPacket p;
      p.kind = PacketKind::data;
      p.sensor_id = static_cast<std::uint8_t>(i);
      p.seq = static_cast<std::uint32_t>(j);
      p.device_timestamp_us = to_device_us(f.host_time_us, jit, fault_for(i));
      p.q = {static_cast<float>(s.orientation.w), static_cast<float>(s.orientation.x),
             static_cast<float>(s.orientation.y), static_cast<float>(s.orientation.z)};
      p.a = {static_cast<float>(s.acceleration.x), static_cast<float>(s.acceleration.y),
             static_cast<float>(s.acceleration.z)};
      plan.packets.push_back({f.host_time_us, p});
    }
  }

  const double t0 = raw.frames.front().host_time_us;
  const double t1 = raw.frames.back().host_time_us;
  const auto k0 = static_cast<std::int64_t>(std::ceil(std::max(0.0, t0) / options.sync_period_us));
  for (std::int64_t k = k0; static_cast<double>(k) * options.sync_period_us <= t1; ++k) {
    const double h = static_cast<double>(k) * options.sync_period_us;
    for (std::size_t i = 0; i < sensors; ++i) {
      const double jit = faults.jitter_us > 0.0 ? jitter(rng) : 0.0;
      SensorPacket p;
      p.kind = PacketKind::sync_pulse;
      p.sensor_id = static_cast<std::uint8_t>(i);
      p.seq = static_cast<std::uint32_t>(k);
      p.device_timestamp_us = to_device_us(h, jit, fault_for(i));
      plan.packets.push_back({h, p});
    }
    ++plan.sync_pulses;
  }

  std::stable_sort(plan.packets.begin(), plan.packets.end(),
                   [](const ScheduledPacket& a, const ScheduledPacket& b) {
                     return a.send_time_us < b.send_time_us;
                   });
  return plan;
}

ReplayStats replay(const RawSequence& raw, const Endpoint& destination, const FaultConfig& faults,
                   const ReplayOptions& options) {
  const ReplayPlan plan = plan_replay(raw, faults, options);
  UdpSocket sock;
  ReplayStats stats{0, plan.dropped, plan.sync_pulses};
  if (plan.packets.empty()) return stats;

  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  const double t0 = plan.packets.front().send_time_us;
  const auto pause = std::chrono::duration_cast<clock::duration>(
      std::chrono::duration<double, std::micro>(options.burst_pause_us));
  for (const auto& sp : plan.packets) {
    if (options.speed > 0.0) {
      const auto due = start + std::chrono::duration_cast<clock::duration>(
                                   std::chrono::duration<double, std::micro>(
                                       (sp.send_time_us - t0) / options.speed));
      std::this_thread::sleep_until(due);
    } else if (options.burst_size > 0 && stats.sent > 0 && stats.sent % options.burst_size == 0) {
      std::this_thread::sleep_for(pause);
    }
    const PacketBytes bytes = encode_packet(sp.packet);
    sock.send_to(destination, bytes);
    ++stats.sent;
  }
  return stats;
}

}  // namespace facecap::stream
