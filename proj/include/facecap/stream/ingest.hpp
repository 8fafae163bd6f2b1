#pragma once

// Packet ingestion: decode -> clock fit -> frame assembly -> tap alignment.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "facecap/imu.hpp"
#include "facecap/stream/assemble.hpp"
#include "facecap/stream/clock.hpp"
#include "facecap/stream/packet.hpp"
#include "facecap/stream/replay.hpp"
#include "facecap/stream/tap.hpp"
#include "facecap/stream/udp.hpp"

namespace facecap::stream {

class IngestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct IngestOptions {
  std::size_t expected_sensors = kFacialSensorCount + 1;
  double sync_period_us = kDefaultSyncPeriodUs;
  std::size_t tap_sensor = kFacialSensorCount;  // mentalis
  bool align_to_tap = true;
  TapOptions tap;
  AssembleOptions assemble;
  /// Live capture: stop after `duration` overall, or after `idle_timeout`
  /// without a datagram once the first one has arrived.
  std::chrono::milliseconds duration{30'000};
  std::chrono::milliseconds idle_timeout{1'000};
};

struct IngestStats {
  std::size_t datagrams = 0;
  std::size_t data_packets = 0;
  std::size_t sync_packets = 0;
  std::size_t tap_markers = 0;
  std::size_t decode_errors = 0;
  std::map<std::string, std::size_t> decode_errors_by_kind;
  std::size_t foreign_sensor_packets = 0;  // sensor id >= expected_sensors
};

struct IngestResult {
  RawSequence sequence;  // trimmed to start at the tap frame when found
  ClockModel clock;
  std::optional<TapEvent> tap;  // frame index before trimming
  FrameBuffer buffer;           // same frames as `sequence`, with provenance
  IngestStats stats;
  std::vector<std::string> warnings;
};

/// Offline path over already decoded packets.
IngestResult ingest_packets(const std::vector<SensorPacket>& packets, const IngestOptions& options,
                            IngestStats stats = {});

/// Offline path over raw datagrams; malformed ones are counted and skipped.
IngestResult ingest_datagrams(const std::vector<std::vector<std::uint8_t>>& datagrams,
                              const IngestOptions& options);

/// Live path: a receiver thread drains the socket into a queue while the
/// calling thread decodes. Throws IngestError when nothing usable arrived.
IngestResult ingest(UdpSocket& socket, const IngestOptions& options);

}  // namespace facecap::stream
