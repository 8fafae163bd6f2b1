#include "facecap/stream/clock.hpp"

#include <cmath>
#include <string>

namespace facecap::stream {

SensorClock fit_clock(std::span<const SyncPulse> pulses) {
  if (pulses.empty()) throw ClockError("fit_clock: no sync pulses");
  const auto n = static_cast<long double>(pulses.size());
  long double mean_h = 0.0L, mean_d = 0.0L;
  for (const auto& p : pulses) {
    mean_h += p.host_time_us;
    mean_d += p.device_timestamp_us;
  }
  mean_h /= n;
  mean_d /= n;
  long double shh = 0.0L, shd = 0.0L;
  for (const auto& p : pulses) {
    const long double dh = p.host_time_us - mean_h;
    const long double dd = p.device_timestamp_us - mean_d;
    shh += dh * dh;
    shd += dh * dd;
  }
  long double slope = 1.0L;
  if (pulses.size() >= 2 && shh > 0.0L) slope = shd / shh;
  const long double offset = mean_d - slope * mean_h;

  SensorClock c;
  c.offset_us = static_cast<double>(offset);
  c.drift_ppm = static_cast<double>((slope - 1.0L) * 1e6L);
  c.pulses = pulses.size();
  if (!std::isfinite(c.offset_us) || !std::isfinite(c.drift_ppm)) {
    throw ClockError("fit_clock: non-finite fit");
  }
  if (std::abs(c.drift_ppm) >= kMaxDriftPpm) {
    throw ClockError("fit_clock: drift " + std::to_string(c.drift_ppm) +
                     " ppm outside +-1000 ppm");
  }
  long double sse = 0.0L;
  for (const auto& p : pulses) {
    const long double r = p.device_timestamp_us - (slope * p.host_time_us + offset);
    sse += r * r;
  }
  c.rms_residual_us = static_cast<double>(std::sqrt(sse / n));
  return c;
}

ClockModel estimate_clock(const std::map<std::size_t, std::vector<SyncPulse>>& pulses) {
  if (pulses.empty()) throw ClockError("estimate_clock: no sensors with sync pulses");
  ClockModel model;
  for (const auto& [sensor, list] : pulses) {
    try {
      model.sensors[sensor] = fit_clock(list);
    } catch (const ClockError& e) {
      throw ClockError("sensor " + std::to_string(sensor) + ": " + e.what());
    }
  }
  return model;
}

double to_host_time(const ClockModel& model, std::size_t sensor_id, double device_timestamp_us) {
  const auto it = model.sensors.find(sensor_id);
  if (it == model.sensors.end()) {
    throw ClockError("no clock model for sensor " + std::to_string(sensor_id));
  }
  const SensorClock& c = it->second;
  const long double slope = 1.0L + static_cast<long double>(c.drift_ppm) * 1e-6L;
  return static_cast<double>((device_timestamp_us - static_cast<long double>(c.offset_us)) / slope);
}

}  // namespace facecap::stream
