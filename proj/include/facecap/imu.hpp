#pragma once

// Frame-indexed IMU sequences and their JSON-lines file format.
//
// File layout (one JSON object per line, one line per frame):
//   {"host_time_us": <real>, "sensors": [{"q": [w, x, y, z], "a": [x, y, z]}, ...]}
// Sensor position in the array is the sensor id; id 0 is the auxiliary IMU.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "facecap/errors.hpp"
#include "facecap/geom.hpp"

namespace facecap {

inline constexpr double kFrameRateHz = 60.0;
inline constexpr double kFramePeriodUs = 1e6 / kFrameRateHz;
inline constexpr std::size_t kFacialSensorCount = 11;
inline constexpr std::size_t kAuxSensorId = 0;

struct ImuSample {
  Vec3 acceleration;  // m/s^2
  Quaternion orientation;
};

struct ImuFrame {
  double host_time_us = 0.0;
  std::vector<ImuSample> sensors;
};

/// Frames share one sensor count; quaternions are unit.
struct ImuSequence {
  std::vector<ImuFrame> frames;

  std::size_t frame_count() const { return frames.size(); }
  std::size_t sensor_count() const { return frames.empty() ? 0 : frames.front().sensors.size(); }

  /// Throws SequenceError when frames disagree on sensor count or carry
  /// non-finite / non-unit data.
  void validate() const;

  /// Per-sensor series view helpers.
  std::vector<Vec3> accelerations(std::size_t sensor) const;
  std::vector<Quaternion> orientations(std::size_t sensor) const;
};

/// Sensor-frame readings as delivered by the IMUs (world-to-sensor attitude,
/// acceleration in the sensor frame).
struct RawSequence : ImuSequence {};

/// Output of calibration: head-compensated, neutral-relative signals.
struct CalibratedSequence : ImuSequence {};

class SequenceError : public FormatError {
 public:
  using FormatError::FormatError;
};

void write_sequence_jsonl(std::ostream& out, const ImuSequence& seq);
ImuSequence read_sequence_jsonl(std::istream& in);

void save_sequence(const std::filesystem::path& path, const ImuSequence& seq);
ImuSequence load_sequence(const std::filesystem::path& path);

}  // namespace facecap
