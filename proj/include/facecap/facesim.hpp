#pragma once

// Blendshape mesh evaluation and synthetic facial-IMU signal generation.
//
// Positions are in millimetres. Simulated accelerations are reported in m/s^2
// once packed into a RawSequence (simulate_acceleration itself returns
// position-units per s^2).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "facecap/calib.hpp"
#include "facecap/errors.hpp"
#include "facecap/geom.hpp"
#include "facecap/imu.hpp"

namespace facecap::facesim {

class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An IMU attachment: the sensor sits on `vertex`; together with the two
/// support vertices it spans one mesh face.
struct Anchor {
  std::size_t sensor_id = 0;
  std::size_t vertex = 0;
  std::array<std::size_t, 2> support{};
  std::string zone;
};

struct BlendshapeRig {
  std::vector<Vec3> neutral;                 // B_0
  std::vector<std::vector<Vec3>> deltas;     // B_k, k = 0..m-1
  std::vector<std::string> blendshape_names;
  std::vector<std::size_t> landmark_indices;
  std::vector<Anchor> anchors;               // sorted by sensor id, ids 0..n-1

  std::size_t vertex_count() const { return neutral.size(); }
  std::size_t blendshape_count() const { return deltas.size(); }
  std::size_t sensor_count() const { return anchors.size(); }

  Vec3 neutral_centroid() const;
  const Anchor& anchor_for(std::size_t sensor_id) const;
  /// Sensor ids of the anchors whose zone equals `zone`.
  std::vector<std::size_t> sensors_in_zone(const std::string& zone) const;

  /// Throws SimulationError naming the first violated invariant.
  void validate() const;
};

struct SyntheticRigOptions {
  std::size_t rings = 13;     // latitude rings around the nose-tip pole
  std::size_t segments = 37;  // vertices per ring
  Vec3 semi_axes{75.0, 100.0, 60.0};
};

/// Half-ellipsoid face (1 + rings * segments vertices, 482 by default) with
/// eight localized blendshapes and an auxiliary anchor plus 11 facial anchors
/// over the frontalis, orbicularis oculi, zygomaticus and buccinator/mentalis
/// zones.
BlendshapeRig make_synthetic_rig(const SyntheticRigOptions& options = {});

/// Zone labels used by the synthetic rig.
inline constexpr const char* kZoneAuxiliary = "auxiliary";
inline constexpr const char* kZoneFrontalis = "frontalis";
inline constexpr const char* kZoneOrbicularisOculi = "orbicularis_oculi";
inline constexpr const char* kZoneZygomaticus = "zygomaticus";
inline constexpr const char* kZoneBuccinatorMentalis = "buccinator_mentalis";

/// T x m weight matrix, row-major, at `fps` frames per second.
class WeightSequence {
 public:
  WeightSequence() = default;
  WeightSequence(std::size_t frames, std::size_t channels, double fps = kFrameRateHz);

  std::size_t frames() const { return frames_; }
  std::size_t channels() const { return channels_; }
  double fps() const { return fps_; }

  double& at(std::size_t frame, std::size_t channel) { return values_[frame * channels_ + channel]; }
  double at(std::size_t frame, std::size_t channel) const {
    return values_[frame * channels_ + channel];
  }
  std::span<const double> row(std::size_t frame) const {
    return {values_.data() + frame * channels_, channels_};
  }
  std::span<double> row(std::size_t frame) { return {values_.data() + frame * channels_, channels_}; }

  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  /// Frames [begin, begin + count).
  WeightSequence slice(std::size_t begin, std::size_t count) const;

  bool operator==(const WeightSequence&) const = default;

 private:
  std::size_t frames_ = 0;
  std::size_t channels_ = 0;
  double fps_ = kFrameRateHz;
  std::vector<double> values_;
};

/// CSV: header "w0,w1,...", one row per frame, full round-trip precision.
void save_weights_csv(const std::filesystem::path& path, const WeightSequence& w);
WeightSequence load_weights_csv(const std::filesystem::path& path);

struct MeshTrajectory {
  std::vector<std::vector<Vec3>> frames;
  double tau = 1.0 / kFrameRateHz;  // seconds between frames

  std::size_t frame_count() const { return frames.size(); }
};

/// M(W) = B_0 + sum_k w_k B_k.
std::vector<Vec3> evaluate_mesh(const BlendshapeRig& rig, std::span<const double> weights);

/// Per-frame evaluate_mesh followed by the frame's head rotation about the
/// neutral-mesh centroid. `head` is empty (no motion) or one matrix per frame.
MeshTrajectory trajectory_from_weights(const BlendshapeRig& rig, const WeightSequence& w,
                                       std::span<const RotationMatrix> head = {});

enum class DenominatorMode { squared, paper_literal };
enum class OrientationMode { orthonormal, paper_literal };

struct SimulatedAcceleration {
  Vec3 value;
  bool boundary = false;  // frame lacks n neighbours on one side; value is zero
};

/// Central second difference (v_{j-n} + v_{j+n} - 2 v_j) / d with
/// d = (n tau)^2 (squared) or n tau (paper_literal).
SimulatedAcceleration simulate_acceleration(const MeshTrajectory& traj, std::size_t vertex,
                                            std::size_t frame, int n,
                                            DenominatorMode mode = DenominatorMode::squared);

/// Sensor axes in world coordinates (columns), i.e. a sensor-to-world matrix.
/// orthonormal: [e1, n x e1, n] with n = normalize(e1 x e2).
/// paper_literal: [e1, (e1 x e2)/|.|, ((e1 x e2) x e2)/|.|], not necessarily
/// a rotation.
Mat3 simulate_orientation(std::span<const Vec3> vertices, const Anchor& anchor,
                          OrientationMode mode = OrientationMode::orthonormal);

/// Proper rotation closest (Frobenius) to `m`. Throws when `m` is singular.
RotationMatrix nearest_rotation(const Mat3& m);

struct NoiseConfig {
  double accel_sigma = 0.0;        // m/s^2, additive per axis in the sensor frame
  double orientation_sigma = 0.0;  // rad, per-axis rotation-vector perturbation
  std::uint64_t seed = 0;
};

struct SimulationConfig {
  int smoothing_n = 2;
  DenominatorMode denominator = DenominatorMode::squared;
  OrientationMode orientation = OrientationMode::orthonormal;
  NoiseConfig noise;
  /// When set, a tap spike of `tap_magnitude` m/s^2 is added along the
  /// `tap_sensor`'s z axis at this frame.
  std::optional<std::size_t> tap_frame;
  double tap_magnitude = 30.0;
  std::size_t tap_sensor = kFacialSensorCount;  // mentalis in the synthetic rig
};

struct SimulationResult {
  RawSequence raw;
  calib::CalibrationProfile profile;  // neutral pose: w = 0, no head motion
  int boundary_frames = 0;            // frames at each end with zeroed acceleration
};

SimulationResult simulate_sequence(const BlendshapeRig& rig, const WeightSequence& w,
                                   std::span<const RotationMatrix> head,
                                   const SimulationConfig& config = {});

/// Smooth random head rotations: rotation-vector components are sums of
/// sinusoids between 0.1 and 0.6 Hz with peak angle about `amplitude` rad.
std::vector<RotationMatrix> generate_head_motion(std::size_t frames, std::uint64_t seed,
                                                 double amplitude = 0.3);

enum class WeightStyle {
  expression,  // slow expression bursts, content below 1.5 Hz
  speech,      // slow envelope plus a 2-3 Hz syllable rhythm
};

struct SyntheticWeightOptions {
  WeightStyle style = WeightStyle::expression;
  double amplitude = 1.0;            // 0 yields an all-zero sequence
  std::vector<bool> active_channels;  // empty: all channels active
};

/// Deterministic per seed; values clamped to [0, 1].
WeightSequence generate_synthetic_weights(std::size_t channels, std::size_t frames,
                                          std::uint64_t seed,
                                          const SyntheticWeightOptions& options = {});

/// `lead_in` all-zero frames followed by `w`, whose first `ramp` frames are
/// faded in with a raised-cosine envelope.
WeightSequence with_neutral_lead_in(const WeightSequence& w, std::size_t lead_in, std::size_t ramp);

WeightStyle parse_weight_style(const std::string& name);
std::string to_string(WeightStyle style);

// Rig file: JSON document
//   {"format": "facecap-rig", "version": 1, "vertex_count": N,
//    "neutral_vertices": <base64 of N*3 little-endian float32>,
//    "blendshapes": [{"name": s, "delta": <base64 of N*3 float32>}, ...],
//    "landmark_indices": [...],
//    "anchors": [{"sensor_id": i, "vertex": v, "support": [a, b], "zone": s}, ...]}
void save_rig(const std::filesystem::path& path, const BlendshapeRig& rig);
BlendshapeRig load_rig(const std::filesystem::path& path);
std::string rig_to_json(const BlendshapeRig& rig);
BlendshapeRig rig_from_json(const std::string& text);

// Trajectory file: 32-byte header {magic "IMFT", u32 version = 1,
// u32 vertex_count, u32 frame_count, f64 tau, u64 reserved = 0} followed by
// frame_count records of vertex_count * 3 little-endian float32.
void save_trajectory(const std::filesystem::path& path, const MeshTrajectory& traj);
MeshTrajectory load_trajectory(const std::filesystem::path& path);

}  // namespace facecap::facesim
