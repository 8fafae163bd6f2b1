#pragma once

// Resampling of per-sensor device-timestamped streams onto a common 60 fps
// host-time grid.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "facecap/imu.hpp"
#include "facecap/stream/clock.hpp"

namespace facecap::stream {

class AssemblyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SlotSource : std::uint8_t { measured, interpolated, held };

const char* to_string(SlotSource s);

struct DeviceSample {
  std::uint32_t seq = 0;
  double device_timestamp_us = 0.0;
  ImuSample sample;
};

/// Samples of one sensor in arrival order.
using SensorStream = std::vector<DeviceSample>;

struct AssembleOptions {
  double fps = kFrameRateHz;
  double measured_window_us = 1000.0;  // sample within +-window of a grid point
  double max_gap_periods = 3.0;        // wider neighbour gaps are held, not interpolated
  std::optional<double> start_us;      // default: earliest first sample
  std::optional<std::size_t> frame_count;  // default: through the latest last sample
};

struct FrameBuffer {
  RawSequence sequence;
  std::vector<std::vector<SlotSource>> provenance;  // [frame][sensor]
  double start_us = 0.0;
  double period_us = kFramePeriodUs;

  std::size_t count(SlotSource s) const;
  /// Drops the first `frames` frames.
  void trim_front(std::size_t frames);
};

/// Orders a stream by seq, keeping the first arrival of each seq.
SensorStream order_stream(const SensorStream& stream);

/// `streams[i]` belongs to sensor i; the clock must cover every sensor.
/// Throws AssemblyError for an empty stream and ClockError for a missing clock.
FrameBuffer assemble_frames(const std::vector<SensorStream>& streams, const ClockModel& clock,
                            const AssembleOptions& options = {});

}  // namespace facecap::stream
