#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

#include "facecap/facesim.hpp"

namespace facecap::facesim {
namespace {

struct BumpSpec {
  const char* name;
  std::vector<std::pair<double, double>> centers;  // front-view (x, y), mm
  double radius;                                   // mm
  Vec3 direction;                                  // zero: surface normal
  double amplitude;                                // mm
};

struct AnchorSpec {
  const char* zone;
  double x;
  double y;
};

// Surface point of the half-ellipsoid under front-view position (x, y).
Vec3 surface_point(const Vec3& axes, double x, double y) {
  const double s = 1.0 - (x / axes.x) * (x / axes.x) - (y / axes.y) * (y / axes.y);
  return {x, y, axes.z * std::sqrt(std::max(0.0, s))};
}

Vec3 surface_normal(const Vec3& axes, const Vec3& p) {
  return normalize({p.x / (axes.x * axes.x), p.y / (axes.y * axes.y), p.z / (axes.z * axes.z)});
}

double bump(double d, double radius) {
  if (d >= radius) return 0.0;
  const double u = 1.0 - (d / radius) * (d / radius);
  return u * u;
}

}  // namespace

Vec3 BlendshapeRig::neutral_centroid() const {
  Vec3 c;
  for (const auto& v : neutral) c += v;
  return neutral.empty() ? c : c / static_cast<double>(neutral.size());
}

const Anchor& BlendshapeRig::anchor_for(std::size_t sensor_id) const {
  for (const auto& a : anchors) {
    if (a.sensor_id == sensor_id) return a;
  }
  throw SimulationError("rig has no anchor for sensor " + std::to_string(sensor_id));
}

std::vector<std::size_t> BlendshapeRig::sensors_in_zone(const std::string& zone) const {
  std::vector<std::size_t> ids;
  for (const auto& a : anchors) {
    if (a.zone == zone) ids.push_back(a.sensor_id);
  }
  return ids;
}

void BlendshapeRig::validate() const {
  const std::size_t n = neutral.size();
  if (n == 0) throw SimulationError("rig has no vertices");
  if (deltas.empty()) throw SimulationError("rig has no blendshapes");
  for (std::size_t k = 0; k < deltas.size(); ++k) {
    if (deltas[k].size() != n) {
      throw SimulationError("blendshape " + std::to_string(k) + " has " +
                            std::to_string(deltas[k].size()) + " vertices, expected " +
                            std::to_string(n));
    }
  }
  if (!blendshape_names.empty() && blendshape_names.size() != deltas.size()) {
    throw SimulationError("blendshape name count does not match blendshape count");
  }
  for (auto idx : landmark_indices) {
    if (idx >= n) throw SimulationError("landmark index " + std::to_string(idx) + " out of range");
  }
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const auto& a = anchors[i];
    if (a.sensor_id != i) {
      throw SimulationError("anchors must be sorted with contiguous sensor ids from 0");
    }
    if (a.vertex >= n || a.support[0] >= n || a.support[1] >= n) {
      throw SimulationError("anchor of sensor " + std::to_string(i) + " references a missing vertex");
    }
    const Vec3 e1 = neutral[a.vertex] - neutral[a.support[0]];
    const Vec3 e2 = neutral[a.vertex] - neutral[a.support[1]];
    if (norm(cross(e1, e2)) < 1e-9 * std::max(1.0, norm(e1) * norm(e2))) {
      throw SimulationError("anchor of sensor " + std::to_string(i) + " is collinear");
    }
  }
}

BlendshapeRig make_synthetic_rig(const SyntheticRigOptions& options) {
  if (options.rings < 3 || options.segments < 3) {
    throw SimulationError("synthetic rig needs at least 3 rings and 3 segments");
  }
  const Vec3 axes = options.semi_axes;
  const std::size_t rings = options.rings;
  const std::size_t segs = options.segments;
  auto index_of = [segs](std::size_t ring, std::size_t seg) {
    return 1 + (ring - 1) * segs + (seg % segs);
  };

  BlendshapeRig rig;
  rig.neutral.reserve(1 + rings * segs);
  rig.neutral.push_back({0.0, 0.0, axes.z});
  for (std::size_t r = 1; r <= rings; ++r) {
    const double theta = (static_cast<double>(r) / static_cast<double>(rings)) * std::numbers::pi / 2.0;
    for (std::size_t s = 0; s < segs; ++s) {
      const double phi = 2.0 * std::numbers::pi * static_cast<double>(s) / static_cast<double>(segs);
      rig.neutral.push_back({axes.x * std::sin(theta) * std::cos(phi),
                             axes.y * std::sin(theta) * std::sin(phi), axes.z * std::cos(theta)});
    }
  }

  const std::vector<BumpSpec> bumps = {
      {"brow_raise_L", {{-25.0, 55.0}}, 35.0, {0.0, 1.0, 0.2}, 8.0},
      {"brow_raise_R", {{25.0, 55.0}}, 35.0, {0.0, 1.0, 0.2}, 8.0},
      {"eye_squint_L", {{-40.0, 15.0}}, 28.0, {0.2, 1.0, 0.3}, 5.0},
      {"eye_squint_R", {{40.0, 15.0}}, 28.0, {-0.2, 1.0, 0.3}, 5.0},
      {"smile_L", {{-30.0, -35.0}}, 50.0, {-0.6, 0.6, 0.3}, 10.0},
      {"smile_R", {{30.0, -35.0}}, 50.0, {0.6, 0.6, 0.3}, 10.0},
      {"jaw_open", {{0.0, -85.0}}, 50.0, {0.0, -1.0, -0.2}, 12.0},
      {"cheek_puff", {{-45.0, -25.0}, {45.0, -25.0}}, 30.0, {0.0, 0.0, 0.0}, 6.0},
  };
  for (const auto& b : bumps) {
    std::vector<Vec3> delta(rig.neutral.size());
    for (const auto& [cx, cy] : b.centers) {
      const Vec3 c = surface_point(axes, cx, cy);
      for (std::size_t v = 0; v < rig.neutral.size(); ++v) {
        const Vec3& p = rig.neutral[v];
        const double f = bump(norm(p - c), b.radius);
        if (f == 0.0) continue;
        const Vec3 dir = (b.direction == Vec3{}) ? surface_normal(axes, p) : normalize(b.direction);
        delta[v] += dir * (b.amplitude * f);
      }
    }
    rig.deltas.push_back(std::move(delta));
    rig.blendshape_names.emplace_back(b.name);
  }

  // Nearest grid vertex with an outer neighbour ring, in front view.
  auto nearest_anchor_vertex = [&](double x, double y, std::size_t& ring, std::size_t& seg) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t r = 2; r < rings; ++r) {
      for (std::size_t s = 0; s < segs; ++s) {
        const Vec3& p = rig.neutral[index_of(r, s)];
        const double d = (p.x - x) * (p.x - x) + (p.y - y) * (p.y - y);
        if (d < best) {
          best = d;
          ring = r;
          seg = s;
        }
      }
    }
  };

  const std::vector<AnchorSpec> anchor_specs = {
      {kZoneAuxiliary, -axes.x, 0.0},
      {kZoneFrontalis, -25.0, 65.0},
      {kZoneFrontalis, 25.0, 65.0},
      {kZoneOrbicularisOculi, -45.0, 30.0},
      {kZoneOrbicularisOculi, 45.0, 30.0},
      {kZoneZygomaticus, -45.0, -10.0},
      {kZoneZygomaticus, 45.0, -10.0},
      {kZoneZygomaticus, -30.0, 5.0},
      {kZoneZygomaticus, 30.0, 5.0},
      {kZoneBuccinatorMentalis, -50.0, -40.0},
      {kZoneBuccinatorMentalis, 50.0, -40.0},
      {kZoneBuccinatorMentalis, 0.0, -80.0},
  };
  for (std::size_t i = 0; i < anchor_specs.size(); ++i) {
    std::size_t ring = 0, seg = 0;
    nearest_anchor_vertex(anchor_specs[i].x, anchor_specs[i].y, ring, seg);
    Anchor a;
    a.sensor_id = i;
    a.vertex = index_of(ring, seg);
    a.support = {index_of(ring, seg + 1), index_of(ring + 1, seg)};
    a.zone = anchor_specs[i].zone;
    rig.anchors.push_back(a);
  }

  // Brows, eye corners, nose, mouth outline and chin.
  const std::vector<std::pair<double, double>> landmark_points = {
      {-45, 45}, {-25, 50}, {-10, 45}, {10, 45},  {25, 50},   {45, 45},   {-50, 25},
      {-30, 25}, {30, 25},  {50, 25},  {0, 10},   {0, -5},    {-15, -10}, {15, -10},
      {-30, -40}, {-15, -35}, {0, -33}, {15, -35}, {30, -40},  {-15, -48}, {0, -50},
      {15, -48}, {0, -75},  {-35, -70}, {35, -70}};
  std::set<std::size_t> landmarks;
  for (const auto& [x, y] : landmark_points) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_v = 0;
    for (std::size_t v = 0; v < rig.neutral.size(); ++v) {
      const Vec3& p = rig.neutral[v];
      const double d = (p.x - x) * (p.x - x) + (p.y - y) * (p.y - y);
      if (d < best) {
        best = d;
        best_v = v;
      }
    }
    landmarks.insert(best_v);
  }
  rig.landmark_indices.assign(landmarks.begin(), landmarks.end());

  rig.validate();
  return rig;
}

WeightSequence::WeightSequence(std::size_t frames, std::size_t channels, double fps)
    : frames_(frames), channels_(channels), fps_(fps), values_(frames * channels, 0.0) {}

WeightSequence WeightSequence::slice(std::size_t begin, std::size_t count) const {
  if (begin + count > frames_) throw std::out_of_range("WeightSequence::slice out of range");
  WeightSequence out(count, channels_, fps_);
  std::copy(values_.begin() + static_cast<std::ptrdiff_t>(begin * channels_),
            values_.begin() + static_cast<std::ptrdiff_t>((begin + count) * channels_),
            out.values_.begin());
  return out;
}

std::vector<Vec3> evaluate_mesh(const BlendshapeRig& rig, std::span<const double> weights) {
  if (weights.size() != rig.blendshape_count()) {
    throw SimulationError("evaluate_mesh: " + std::to_string(weights.size()) +
                          " weights for " + std::to_string(rig.blendshape_count()) +
                          " blendshapes");
  }
  std::vector<Vec3> mesh = rig.neutral;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const double w = weights[k];
    if (w == 0.0) continue;
    const auto& delta = rig.deltas[k];
    for (std::size_t v = 0; v < mesh.size(); ++v) mesh[v] += delta[v] * w;
  }
  return mesh;
}

MeshTrajectory trajectory_from_weights(const BlendshapeRig& rig, const WeightSequence& w,
                                       std::span<const RotationMatrix> head) {
  if (!head.empty() && head.size() != w.frames()) {
    throw SimulationError("trajectory_from_weights: " + std::to_string(head.size()) +
                          " head rotations for " + std::to_string(w.frames()) + " frames");
  }
  MeshTrajectory traj;
  traj.tau = 1.0 / w.fps();
  traj.frames.reserve(w.frames());
  const Vec3 pivot = rig.neutral_centroid();
  for (std::size_t j = 0; j < w.frames(); ++j) {
    auto mesh = evaluate_mesh(rig, w.row(j));
    if (!head.empty()) {
      const RotationMatrix& g = head[j];
      for (auto& v : mesh) v = g * (v - pivot) + pivot;
    }
    traj.frames.push_back(std::move(mesh));
  }
  return traj;
}

}  // namespace facecap::facesim
