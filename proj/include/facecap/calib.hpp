#pragma once

// Magnetometer offset/scale calibration and coordinate calibration of
// face-mounted IMUs: neutral-relative rotation, world alignment of
// accelerations, and head-motion compensation against the auxiliary IMU.
//
// All rotation matrices follow the world-to-sensor convention (see geom.hpp).
// Under that convention a rigid head rotation G_t produces raw attitudes
// R_raw^i(t) = R_neutral^i * G_t^-1, and the compensated rotations of every
// facial sensor reduce to the identity.

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "facecap/errors.hpp"
#include "facecap/geom.hpp"
#include "facecap/imu.hpp"

namespace facecap::calib {

class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MagCalibration {
  Vec3 offset{0.0, 0.0, 0.0};
  Vec3 scale{1.0, 1.0, 1.0};  // strictly positive

  void validate() const;
};

/// Samples whose per-axis distance from the median exceeds this many median
/// absolute deviations are dropped before the min/max fit. Axes with zero MAD
/// are not filtered.
inline constexpr double kMagOutlierMadMultiple = 4.0;

/// Returns the samples that survive the median/MAD outlier filter, in order.
std::vector<Vec3> filter_mag_outliers(std::span<const Vec3> samples);

/// offset_k = (max M_k + min M_k) / 2,
/// scale_k  = mean_j(max M_j - min M_j) / (max M_k - min M_k),
/// computed on the outlier-filtered samples.
MagCalibration mag_calibrate(std::span<const Vec3> samples);

/// (m_k - offset_k) * scale_k per axis.
Vec3 apply_mag_calibration(const MagCalibration& c, const Vec3& m);

/// Selects how the auxiliary rotation acts on facial accelerations.
///   literal: a^i = (R_rel^0)^-1 a_align^i
///   inverse: a^i = R_rel^0 a_align^i
enum class AccHeadComp { literal, inverse };

struct CalibrationProfile {
  std::vector<RotationMatrix> neutral;  // R_neutral^i, indexed by sensor id
  std::size_t aux_index = kAuxSensorId;
  std::vector<MagCalibration> mag;      // empty, or one entry per sensor

  std::size_t sensor_count() const { return neutral.size(); }
  void validate() const;
};

/// R_rel = neutral^-1 * raw.
RotationMatrix relative_rotation(const RotationMatrix& neutral, const RotationMatrix& raw);

/// a_align = raw^-1 * a_raw.
Vec3 align_acceleration(const RotationMatrix& raw, const Vec3& a_raw);

struct CompensatedPose {
  RotationMatrix rotation;  // R_calib^i
  Vec3 acceleration;        // a^i
};

/// Head compensation for one frame. The auxiliary sensor passes through.
std::vector<CompensatedPose> head_compensate_frame(const CalibrationProfile& profile,
                                                   std::span<const RotationMatrix> rels,
                                                   std::span<const Vec3> aligned,
                                                   AccHeadComp mode = AccHeadComp::literal);

struct CalibrateOptions {
  AccHeadComp acc_head_comp = AccHeadComp::literal;
  /// Worker threads for frame-parallel calibration; 0 selects hardware
  /// concurrency. Output is identical for any value.
  unsigned threads = 1;
};

/// Calibrates one frame of raw samples.
ImuFrame calibrate_frame(const CalibrationProfile& profile, const ImuFrame& raw,
                         AccHeadComp mode = AccHeadComp::literal);

CalibratedSequence calibrate_sequence(const CalibrationProfile& profile, const RawSequence& raw,
                                      const CalibrateOptions& options = {});

// Profile file:
//   {"aux_index": 0, "convention": "world_to_sensor",
//    "neutral": [[9 reals, row-major], ...],
//    "mag": [{"offset": [3], "scale": [3]}, ...]}
void save_profile(const std::filesystem::path& path, const CalibrationProfile& profile);
CalibrationProfile load_profile(const std::filesystem::path& path);
std::string profile_to_json(const CalibrationProfile& profile);
CalibrationProfile profile_from_json(const std::string& text);

std::string mag_calibration_to_json(const MagCalibration& c);

}  // namespace facecap::calib
