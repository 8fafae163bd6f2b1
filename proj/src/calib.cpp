#include "facecap/calib.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace facecap::calib {
namespace {

double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  std::sort(v.begin(), v.end());
  return (n % 2 == 1) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

constexpr const char* kAxisNames[3] = {"x", "y", "z"};

}  // namespace

void MagCalibration::validate() const {
  if (!offset.is_finite() || !scale.is_finite()) {
    throw CalibrationError("magnetometer calibration has non-finite values");
  }
  for (std::size_t k = 0; k < 3; ++k) {
    if (!(scale[k] > 0.0)) {
      throw CalibrationError(std::string("magnetometer scale on axis ") + kAxisNames[k] +
                             " is not positive");
    }
  }
}

std::vector<Vec3> filter_mag_outliers(std::span<const Vec3> samples) {
  if (samples.empty()) return {};
  std::array<double, 3> med{};
  std::array<double, 3> mad{};
  for (std::size_t k = 0; k < 3; ++k) {
    std::vector<double> axis;
    axis.reserve(samples.size());
    for (const auto& s : samples) axis.push_back(s[k]);
    med[k] = median_of(axis);
    for (auto& v : axis) v = std::abs(v - med[k]);
    mad[k] = median_of(std::move(axis));
  }
  std::vector<Vec3> kept;
  kept.reserve(samples.size());
  for (const auto& s : samples) {
    bool inlier = true;
    for (std::size_t k = 0; k < 3 && inlier; ++k) {
      if (mad[k] > 0.0 && std::abs(s[k] - med[k]) > kMagOutlierMadMultiple * mad[k]) {
        inlier = false;
      }
    }
    if (inlier) kept.push_back(s);
  }
  return kept;
}

MagCalibration mag_calibrate(std::span<const Vec3> samples) {
  if (samples.empty()) throw CalibrationError("mag_calibrate: no samples");
  for (const auto& s : samples) {
    if (!s.is_finite()) throw CalibrationError("mag_calibrate: non-finite sample");
  }
  const auto kept = filter_mag_outliers(samples);
  if (kept.size() < 2) {
    throw CalibrationError("mag_calibrate: fewer than 2 samples after outlier filtering");
  }
  Vec3 lo = kept.front();
  Vec3 hi = kept.front();
  for (const auto& s : kept) {
    for (std::size_t k = 0; k < 3; ++k) {
      lo[k] = std::min(lo[k], s[k]);
      hi[k] = std::max(hi[k], s[k]);
    }
  }
  const Vec3 range = hi - lo;
  for (std::size_t k = 0; k < 3; ++k) {
    if (!(range[k] > 0.0)) {
      throw CalibrationError(std::string("mag_calibrate: degenerate axis ") + kAxisNames[k] +
                             " (zero range)");
    }
  }
  const double mean_range = (range.x + range.y + range.z) / 3.0;
  MagCalibration c;
  for (std::size_t k = 0; k < 3; ++k) {
    c.offset[k] = (hi[k] + lo[k]) / 2.0;
    c.scale[k] = mean_range / range[k];
  }
  return c;
}

Vec3 apply_mag_calibration(const MagCalibration& c, const Vec3& m) {
  return {(m.x - c.offset.x) * c.scale.x, (m.y - c.offset.y) * c.scale.y,
          (m.z - c.offset.z) * c.scale.z};
}

void CalibrationProfile::validate() const {
  if (neutral.empty()) throw CalibrationError("calibration profile has no sensors");
  if (aux_index >= neutral.size()) {
    throw CalibrationError("auxiliary index " + std::to_string(aux_index) +
                           " outside the profile's " + std::to_string(neutral.size()) +
                           " sensors");
  }
  for (std::size_t i = 0; i < neutral.size(); ++i) {
    if (!neutral[i].is_proper_rotation(1e-6)) {
      throw CalibrationError("neutral orientation of sensor " + std::to_string(i) +
                             " is not a proper rotation");
    }
  }
  if (!mag.empty()) {
    if (mag.size() != neutral.size()) {
      throw CalibrationError("profile has " + std::to_string(mag.size()) +
                             " magnetometer entries for " + std::to_string(neutral.size()) +
                             " sensors");
    }
    for (const auto& m : mag) m.validate();
  }
}

RotationMatrix relative_rotation(const RotationMatrix& neutral, const RotationMatrix& raw) {
  return neutral.transpose() * raw;
}

Vec3 align_acceleration(const RotationMatrix& raw, const Vec3& a_raw) {
  return raw.transpose() * a_raw;
}

std::vector<CompensatedPose> head_compensate_frame(const CalibrationProfile& profile,
                                                   std::span<const RotationMatrix> rels,
                                                   std::span<const Vec3> aligned,
                                                   AccHeadComp mode) {
  if (rels.size() != aligned.size()) {
    throw CalibrationError("head_compensate_frame: rotation/acceleration count mismatch");
  }
  const std::size_t aux = profile.aux_index;
  if (aux >= rels.size()) {
    throw CalibrationError("head_compensate_frame: auxiliary sensor " + std::to_string(aux) +
                           " missing from frame");
  }
  const RotationMatrix& head = rels[aux];
  const RotationMatrix head_inv = head.transpose();
  const RotationMatrix& acc_factor = mode == AccHeadComp::literal ? head_inv : head;

  std::vector<CompensatedPose> out(rels.size());
  for (std::size_t i = 0; i < rels.size(); ++i) {
    if (i == aux) {
      out[i] = {rels[i], aligned[i]};
    } else {
      out[i] = {head_inv * rels[i], acc_factor * aligned[i]};
    }
  }
  return out;
}

ImuFrame calibrate_frame(const CalibrationProfile& profile, const ImuFrame& raw,
                         AccHeadComp mode) {
  const std::size_t n = raw.sensors.size();
  if (n != profile.sensor_count()) {
    throw CalibrationError("frame has " + std::to_string(n) + " sensors but profile covers " +
                           std::to_string(profile.sensor_count()));
  }
  std::vector<RotationMatrix> rels(n);
  std::vector<Vec3> aligned(n);
  for (std::size_t i = 0; i < n; ++i) {
    const RotationMatrix r_raw = quat_to_matrix(raw.sensors[i].orientation);
    rels[i] = relative_rotation(profile.neutral[i], r_raw);
    aligned[i] = align_acceleration(r_raw, raw.sensors[i].acceleration);
  }
  const auto poses = head_compensate_frame(profile, rels, aligned, mode);
  ImuFrame out;
  out.host_time_us = raw.host_time_us;
  out.sensors.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.sensors[i].orientation = matrix_to_quat(poses[i].rotation);
    out.sensors[i].acceleration = poses[i].acceleration;
  }
  return out;
}

CalibratedSequence calibrate_sequence(const CalibrationProfile& profile, const RawSequence& raw,
                                      const CalibrateOptions& options) {
  profile.validate();
  raw.validate();
  if (!raw.frames.empty() && raw.sensor_count() != profile.sensor_count()) {
    throw CalibrationError("sequence has " + std::to_string(raw.sensor_count()) +
                           " sensors but profile covers " +
                           std::to_string(profile.sensor_count()));
  }

  CalibratedSequence out;
  out.frames.resize(raw.frames.size());
  const std::size_t frames = raw.frames.size();
  unsigned workers = options.threads == 0 ? std::max(1u, std::thread::hardware_concurrency())
                                          : options.threads;
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(1, frames)));

  auto run = [&](std::size_t begin, std::size_t end) {
    for (std::size_t j = begin; j < end; ++j) {
      out.frames[j] = calibrate_frame(profile, raw.frames[j], options.acc_head_comp);
    }
  };
  if (workers <= 1) {
    run(0, frames);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (frames + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
      const std::size_t b = w * chunk;
      const std::size_t e = std::min(frames, b + chunk);
      if (b < e) pool.emplace_back(run, b, e);
    }
  }
  return out;
}

namespace {

nlohmann::json vec_json(const Vec3& v) { return {v.x, v.y, v.z}; }

Vec3 vec_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw FormatError("expected a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

nlohmann::json mag_json(const MagCalibration& c) {
  return {{"offset", vec_json(c.offset)}, {"scale", vec_json(c.scale)}};
}

}  // namespace

std::string mag_calibration_to_json(const MagCalibration& c) { return mag_json(c).dump(2); }

std::string profile_to_json(const CalibrationProfile& profile) {
  nlohmann::json j;
  j["aux_index"] = profile.aux_index;
  j["convention"] = "world_to_sensor";
  j["neutral"] = nlohmann::json::array();
  for (const auto& r : profile.neutral) j["neutral"].push_back(r.data());
  j["mag"] = nlohmann::json::array();
  for (const auto& m : profile.mag) j["mag"].push_back(mag_json(m));
  return j.dump(2);
}

CalibrationProfile profile_from_json(const std::string& text) {
  CalibrationProfile p;
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.contains("convention") && j.at("convention") != "world_to_sensor") {
      throw FormatError("unsupported rotation convention " + j.at("convention").dump());
    }
    p.aux_index = j.at("aux_index").get<std::size_t>();
    for (const auto& r : j.at("neutral")) {
      if (!r.is_array() || r.size() != 9) throw FormatError("neutral entries need 9 reals");
      p.neutral.emplace_back(r.get<std::array<double, 9>>());
    }
    if (j.contains("mag")) {
      for (const auto& m : j.at("mag")) {
        p.mag.push_back({vec_from_json(m.at("offset")), vec_from_json(m.at("scale"))});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("calibration profile: ") + e.what());
  }
  try {
    p.validate();
  } catch (const CalibrationError& e) {
    throw FormatError(std::string("calibration profile: ") + e.what());
  }
  return p;
}

void save_profile(const std::filesystem::path& path, const CalibrationProfile& profile) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << profile_to_json(profile) << '\n';
}

CalibrationProfile load_profile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return profile_from_json(ss.str());
}

}  // namespace facecap::calib
