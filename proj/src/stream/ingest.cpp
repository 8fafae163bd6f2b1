#include "facecap/stream/ingest.hpp"

#include <atomic>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <thread>

namespace facecap::stream {
namespace {

using Datagram = std::vector<std::uint8_t>;

class DatagramQueue {
 public:
  void push(Datagram d) {
    {
      std::lock_guard lock(mu_);
      items_.push_back(std::move(d));
    }
    cv_.notify_one();
  }
  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }
  std::optional<Datagram> pop() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return closed_ || !items_.empty(); });
    if (items_.empty()) return std::nullopt;
    Datagram d = std::move(items_.front());
    items_.pop_front();
    return d;
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Datagram> items_;
  bool closed_ = false;
};

void decode_into(const Datagram& d, std::vector<SensorPacket>& out, IngestStats& stats) {
  ++stats.datagrams;
  try {
    out.push_back(decode_packet(d));
  } catch (const DecodeError& e) {
    ++stats.decode_errors;
    ++stats.decode_errors_by_kind[to_string(e.kind())];
  }
}

}  // namespace

IngestResult ingest_packets(const std::vector<SensorPacket>& packets, const IngestOptions& opt,
                            IngestStats stats) {
  IngestResult res;
  const std::size_t n = opt.expected_sensors;
  if (n == 0) throw IngestError("ingest: expected sensor count must be positive");
  std::vector<SensorStream> streams(n);
  std::map<std::size_t, std::vector<SyncPulse>> pulses;

  for (const auto& p : packets) {
    if (p.sensor_id >= n) {
      ++stats.foreign_sensor_packets;
      continue;
    }
    switch (p.kind) {
      case PacketKind::data: {
        ++stats.data_packets;
        DeviceSample s;
        s.seq = p.seq;
        s.device_timestamp_us = static_cast<double>(p.device_timestamp_us);
        s.sample.orientation = canonical(Quaternion{p.q[0], p.q[1], p.q[2], p.q[3]}.normalized());
        s.sample.acceleration = {p.a[0], p.a[1], p.a[2]};
        streams[p.sensor_id].push_back(s);
        break;
      }
      case PacketKind::sync_pulse:
        ++stats.sync_packets;
        pulses[p.sensor_id].push_back({static_cast<double>(p.seq) * opt.sync_period_us,
                                       static_cast<double>(p.device_timestamp_us)});
        break;
      case PacketKind::tap_marker:
        ++stats.tap_markers;
        break;
    }
  }
  res.stats = stats;

  if (stats.data_packets == 0) {
    throw IngestError("ingest: no valid data packets (" + std::to_string(stats.decode_errors) +
                      " decode errors)");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (streams[i].empty()) throw IngestError("ingest: no data from sensor " + std::to_string(i));
    if (pulses.find(i) == pulses.end()) {
      throw IngestError("ingest: no sync pulses from sensor " + std::to_string(i));
    }
  }
  try {
    res.clock = estimate_clock(pulses);
  } catch (const ClockError& e) {
    throw IngestError(std::string("ingest: ") + e.what());
  }
  res.buffer = assemble_frames(streams, res.clock, opt.assemble);

  if (opt.tap_sensor < n) {
    try {
      res.tap = detect_tap(std::span<const Vec3>(res.buffer.sequence.accelerations(opt.tap_sensor)),
                           opt.tap);
    } catch (const TapError& e) {
      res.warnings.push_back(std::string("no tap detected (") + e.what() +
                             "); sequence left unaligned");
    }
  } else {
    res.warnings.push_back("tap sensor is not among the expected sensors; sequence left unaligned");
  }
  if (res.tap && opt.align_to_tap) res.buffer.trim_front(res.tap->frame);
  if (stats.decode_errors > 0) {
    res.warnings.push_back(std::to_string(stats.decode_errors) + " malformed datagrams skipped");
  }
  res.sequence = res.buffer.sequence;
  return res;
}

IngestResult ingest_datagrams(const std::vector<Datagram>& datagrams, const IngestOptions& opt) {
  IngestStats stats;
  std::vector<SensorPacket> packets;
  packets.reserve(datagrams.size());
  for (const auto& d : datagrams) decode_into(d, packets, stats);
  return ingest_packets(packets, opt, stats);
}

IngestResult ingest(UdpSocket& socket, const IngestOptions& opt) {
  DatagramQueue queue;
  std::exception_ptr receiver_error;
  std::jthread receiver([&](std::stop_token stop) {
    try {
      using clock = std::chrono::steady_clock;
      const auto deadline = clock::now() + opt.duration;
      bool started = false;
      Datagram buf(2048);
      while (!stop.stop_requested()) {
        const auto now = clock::now();
        if (now >= deadline) break;
        auto wait = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now);
        if (started) wait = std::min(wait, opt.idle_timeout);
        wait = std::max(wait, std::chrono::milliseconds(1));
        const auto n = socket.receive(buf, wait);
        if (!n) {
          if (started) break;
          continue;
        }
        started = true;
        const std::size_t keep = std::min(*n, buf.size());
        queue.push(Datagram(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(keep)));
      }
    } catch (...) {
      receiver_error = std::current_exception();
    }
    queue.close();
  });

  IngestStats stats;
  std::vector<SensorPacket> packets;
  while (auto d = queue.pop()) decode_into(*d, packets, stats);
  receiver.join();
  if (receiver_error) std::rethrow_exception(receiver_error);
  return ingest_packets(packets, opt, stats);
}

}  // namespace facecap::stream
