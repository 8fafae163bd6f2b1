#pragma once

// Per-sensor clock model fitted from sync pulses:
//   device_us = host_us * (1 + drift_ppm * 1e-6) + offset_us

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <vector>

namespace facecap::stream {

class ClockError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kMaxDriftPpm = 1000.0;

struct SyncPulse {
  double host_time_us = 0.0;
  double device_timestamp_us = 0.0;
};

struct SensorClock {
  double offset_us = 0.0;
  double drift_ppm = 0.0;
  std::size_t pulses = 0;
  double rms_residual_us = 0.0;
};

struct ClockModel {
  std::map<std::size_t, SensorClock> sensors;

  bool covers(std::size_t sensor_id) const { return sensors.count(sensor_id) != 0; }
};

/// Least-squares line through (host, device). A single pulse (or pulses that
/// share one host time) fits the offset only. Throws ClockError for no pulses
/// or a drift outside +-1000 ppm.
SensorClock fit_clock(std::span<const SyncPulse> pulses);

ClockModel estimate_clock(const std::map<std::size_t, std::vector<SyncPulse>>& pulses);

/// Inverse of the fitted line. Throws ClockError for an unknown sensor.
double to_host_time(const ClockModel& model, std::size_t sensor_id, double device_timestamp_us);

}  // namespace facecap::stream
