#include "facecap/stream/assemble.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace facecap::stream {
namespace {

// Device timestamps are whole microseconds.
constexpr double kTimestampSlackUs = 1.0;

struct HostSample {
  double t;
  const ImuSample* sample;
};

ImuSample lerp_sample(const ImuSample& a, const ImuSample& b, double f) {
  ImuSample out;
  out.acceleration = a.acceleration + (b.acceleration - a.acceleration) * f;
  out.orientation = slerp(a.orientation, b.orientation, f);
  return out;
}

}  // namespace

const char* to_string(SlotSource s) {
  switch (s) {
    case SlotSource::measured: return "measured";
    case SlotSource::interpolated: return "interpolated";
    case SlotSource::held: return "held";
  }
  return "unknown";
}

std::size_t FrameBuffer::count(SlotSource s) const {
  std::size_t n = 0;
  for (const auto& row : provenance) n += static_cast<std::size_t>(std::count(row.begin(), row.end(), s));
  return n;
}

void FrameBuffer::trim_front(std::size_t frames) {
  frames = std::min(frames, sequence.frames.size());
  const auto d = static_cast<std::ptrdiff_t>(frames);
  sequence.frames.erase(sequence.frames.begin(), sequence.frames.begin() + d);
  provenance.erase(provenance.begin(), provenance.begin() + d);
  start_us += static_cast<double>(frames) * period_us;
}

SensorStream order_stream(const SensorStream& stream) {
  SensorStream out = stream;
  std::stable_sort(out.begin(), out.end(),
                   [](const DeviceSample& a, const DeviceSample& b) { return a.seq < b.seq; });
  out.erase(std::unique(out.begin(), out.end(),
                        [](const DeviceSample& a, const DeviceSample& b) { return a.seq == b.seq; }),
            out.end());
  return out;
}

FrameBuffer assemble_frames(const std::vector<SensorStream>& streams, const ClockModel& clock,
                            const AssembleOptions& opt) {
  if (streams.empty()) throw AssemblyError("assemble_frames: no sensor streams");
  if (!(opt.fps > 0.0)) throw AssemblyError("assemble_frames: fps must be positive");
  const double period = 1e6 / opt.fps;

  std::vector<SensorStream> ordered(streams.size());
  std::vector<std::vector<HostSample>> host(streams.size());
  double first = std::numeric_limits<double>::infinity();
  double last = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < streams.size(); ++i) {
    if (streams[i].empty()) {
      throw AssemblyError("assemble_frames: sensor " + std::to_string(i) + " has no samples");
    }
    ordered[i] = order_stream(streams[i]);
    for (const auto& s : ordered[i]) {
      host[i].push_back({to_host_time(clock, i, s.device_timestamp_us), &s.sample});
    }
    std::stable_sort(host[i].begin(), host[i].end(),
                     [](const HostSample& a, const HostSample& b) { return a.t < b.t; });
    first = std::min(first, host[i].front().t);
    last = std::max(last, host[i].back().t);
  }

  FrameBuffer buf;
  buf.period_us = period;
  buf.start_us = opt.start_us.value_or(first);
  std::size_t frames = 0;
  if (opt.frame_count) {
    frames = *opt.frame_count;
  } else if (last >= buf.start_us) {
    frames = static_cast<std::size_t>(
        std::floor((last - buf.start_us + kTimestampSlackUs) / period)) + 1;
  }

  buf.sequence.frames.resize(frames);
  buf.provenance.assign(frames, std::vector<SlotSource>(streams.size(), SlotSource::held));
  for (std::size_t k = 0; k < frames; ++k) {
    buf.sequence.frames[k].host_time_us = buf.start_us + static_cast<double>(k) * period;
    buf.sequence.frames[k].sensors.resize(streams.size());
  }

  for (std::size_t i = 0; i < streams.size(); ++i) {
    const auto& hs = host[i];
    std::size_t next = 0;  // first sample with t > g
    for (std::size_t k = 0; k < frames; ++k) {
      const double g = buf.sequence.frames[k].host_time_us;
      while (next < hs.size() && hs[next].t <= g) ++next;
      const HostSample* prev = next > 0 ? &hs[next - 1] : nullptr;
      const HostSample* after = next < hs.size() ? &hs[next] : nullptr;

      const HostSample* nearest = prev;
      if (!nearest || (after && after->t - g < g - prev->t)) nearest = after;

      ImuSample& slot = buf.sequence.frames[k].sensors[i];
      SlotSource& src = buf.provenance[k][i];
      if (std::abs(nearest->t - g) <= opt.measured_window_us) {
        slot = *nearest->sample;
        src = SlotSource::measured;
      } else if (prev && after && after->t - prev->t <= opt.max_gap_periods * period + kTimestampSlackUs) {
        slot = lerp_sample(*prev->sample, *after->sample, (g - prev->t) / (after->t - prev->t));
        src = SlotSource::interpolated;
      } else {
        slot = prev ? *prev->sample : *after->sample;
        src = SlotSource::held;
      }
    }
  }
  return buf;
}

}  // namespace facecap::stream
