#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "facecap/facesim.hpp"

namespace facecap::facesim {

SimulatedAcceleration simulate_acceleration(const MeshTrajectory& traj, std::size_t vertex,
                                            std::size_t frame, int n, DenominatorMode mode) {
  if (n < 1) throw SimulationError("simulate_acceleration: smoothing constant must be >= 1");
  if (frame >= traj.frame_count()) {
    throw SimulationError("simulate_acceleration: frame " + std::to_string(frame) + " out of range");
  }
  if (vertex >= traj.frames[frame].size()) {
    throw SimulationError("simulate_acceleration: vertex " + std::to_string(vertex) +
                          " out of range");
  }
  const auto un = static_cast<std::size_t>(n);
  if (frame < un || frame + un >= traj.frame_count()) return {{}, true};

  const Vec3& prev = traj.frames[frame - un][vertex];
  const Vec3& next = traj.frames[frame + un][vertex];
  const Vec3& cur = traj.frames[frame][vertex];
  const double step = static_cast<double>(n) * traj.tau;
  const double denom = mode == DenominatorMode::squared ? step * step : step;
  return {(prev + next - cur * 2.0) / denom, false};
}

Mat3 simulate_orientation(std::span<const Vec3> vertices, const Anchor& anchor,
                          OrientationMode mode) {
  if (anchor.vertex >= vertices.size() || anchor.support[0] >= vertices.size() ||
      anchor.support[1] >= vertices.size()) {
    throw SimulationError("simulate_orientation: anchor references a missing vertex");
  }
  const Vec3& v = vertices[anchor.vertex];
  const Vec3 e1 = normalize(v - vertices[anchor.support[0]]);
  const Vec3 e2 = normalize(v - vertices[anchor.support[1]]);
  const Vec3 c = cross(e1, e2);
  const double cn = norm(c);
  if (cn < 1e-9) {
    throw SimulationError("degenerate anchor for sensor " + std::to_string(anchor.sensor_id) +
                          ": supporting edges are collinear");
  }
  const Vec3 normal = c / cn;
  if (mode == OrientationMode::orthonormal) {
    return Mat3::from_columns(e1, cross(normal, e1), normal);
  }
  const Vec3 third = cross(c, e2);
  return Mat3::from_columns(e1, normal, third / norm(third));
}

// GCC 11 reports a spurious maybe-uninitialized inside Eigen's 3x3 SVD.
#pragma GCC diagnostic push
#pragma GCC diagnostic ignored "-Wmaybe-uninitialized"
RotationMatrix nearest_rotation(const Mat3& m) {
  Eigen::Matrix3d a;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) a(r, c) = m(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
  }
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (svd.singularValues()(2) < 1e-9 * std::max(1.0, svd.singularValues()(0))) {
    throw SimulationError("nearest_rotation: matrix is singular");
  }
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Eigen::Matrix3d r = svd.matrixU() * d * svd.matrixV().transpose();
  Mat3 out;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) out(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = r(i, j);
  }
  return out;
}
#pragma GCC diagnostic pop

namespace {

// World-to-sensor attitude of an anchor in one frame.
RotationMatrix sensor_attitude(std::span<const Vec3> vertices, const Anchor& anchor,
                               OrientationMode mode) {
  const Mat3 axes = simulate_orientation(vertices, anchor, mode);
  const RotationMatrix sensor_to_world =
      mode == OrientationMode::orthonormal ? axes : nearest_rotation(axes);
  return sensor_to_world.transpose();
}

}  // namespace

SimulationResult simulate_sequence(const BlendshapeRig& rig, const WeightSequence& w,
                                   std::span<const RotationMatrix> head,
                                   const SimulationConfig& config) {
  rig.validate();
  if (w.channels() != rig.blendshape_count()) {
    throw SimulationError("simulate_sequence: weights have " + std::to_string(w.channels()) +
                          " channels, rig has " + std::to_string(rig.blendshape_count()));
  }
  if (config.smoothing_n < 1) throw SimulationError("simulate_sequence: n must be >= 1");
  const auto n = static_cast<std::size_t>(config.smoothing_n);
  if (w.frames() < 2 * n + 1) {
    throw SimulationError("simulate_sequence: need at least 2n+1 = " + std::to_string(2 * n + 1) +
                          " frames");
  }
  if (config.tap_frame && config.tap_sensor >= rig.sensor_count()) {
    throw SimulationError("simulate_sequence: tap sensor out of range");
  }

  const MeshTrajectory traj = trajectory_from_weights(rig, w, head);
  const std::size_t sensors = rig.sensor_count();

  SimulationResult result;
  result.boundary_frames = config.smoothing_n;
  result.profile.aux_index = kAuxSensorId;
  for (const auto& anchor : rig.anchors) {
    result.profile.neutral.push_back(sensor_attitude(rig.neutral, anchor, config.orientation));
  }

  std::mt19937_64 rng(config.noise.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const bool noisy = config.noise.accel_sigma > 0.0 || config.noise.orientation_sigma > 0.0;

  auto& frames = result.raw.frames;
  frames.resize(w.frames());
  for (std::size_t j = 0; j < w.frames(); ++j) {
    ImuFrame& frame = frames[j];
    frame.host_time_us = static_cast<double>(j) * 1e6 / w.fps();
    frame.sensors.resize(sensors);
    for (std::size_t i = 0; i < sensors; ++i) {
      const Anchor& anchor = rig.anchors[i];
      RotationMatrix attitude = sensor_attitude(traj.frames[j], anchor, config.orientation);
      // mm/s^2 -> m/s^2, then into the sensor frame.
      const auto acc = simulate_acceleration(traj, anchor.vertex, j, config.smoothing_n,
                                             config.denominator);
      Vec3 a_sensor = attitude * (acc.value * 1e-3);
      Quaternion q = matrix_to_quat(attitude);
      if (noisy) {
        const double sa = config.noise.accel_sigma;
        const double so = config.noise.orientation_sigma;
        a_sensor += Vec3{gauss(rng), gauss(rng), gauss(rng)} * sa;
        const Vec3 rv = Vec3{gauss(rng), gauss(rng), gauss(rng)} * so;
        q = quat_multiply(quat_from_rotation_vector(rv), q);
      }
      if (config.tap_frame && *config.tap_frame == j && config.tap_sensor == i) {
        a_sensor.z += config.tap_magnitude;
      }
      frame.sensors[i] = {a_sensor, q};
    }
  }
  return result;
}

std::vector<RotationMatrix> generate_head_motion(std::size_t frames, std::uint64_t seed,
                                                 double amplitude) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> freq(0.1, 0.6);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> gain(0.3, 1.0);
  constexpr int kTerms = 3;
  struct Term {
    double f, p, g;
  };
  std::array<std::array<Term, kTerms>, 3> terms{};
  for (auto& axis : terms) {
    double total = 0.0;
    for (auto& t : axis) {
      t = {freq(rng), phase(rng), gain(rng)};
      total += t.g;
    }
    for (auto& t : axis) t.g *= amplitude / total;
  }
  std::vector<RotationMatrix> out;
  out.reserve(frames);
  for (std::size_t j = 0; j < frames; ++j) {
    const double t = static_cast<double>(j) / kFrameRateHz;
    Vec3 rv;
    for (std::size_t k = 0; k < 3; ++k) {
      for (const auto& term : terms[k]) {
        rv[k] += term.g * std::sin(2.0 * std::numbers::pi * term.f * t + term.p);
      }
    }
    out.push_back(quat_to_matrix(quat_from_rotation_vector(rv)));
  }
  return out;
}

}  // namespace facecap::facesim
