#include <doctest.h>

#include <filesystem>
#include <random>
#include <vector>

#include "facecap/calib.hpp"
#include "support.hpp"

using namespace facecap;
using namespace facecap::calib;
using testing::max_abs_diff;

namespace {

std::vector<Vec3> box_samples(Vec3 lo, Vec3 hi) {
  std::vector<Vec3> out;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      for (int k = 0; k < 3; ++k) {
        out.push_back({lo.x + (hi.x - lo.x) * i / 2.0, lo.y + (hi.y - lo.y) * j / 2.0,
                       lo.z + (hi.z - lo.z) * k / 2.0});
      }
    }
  }
  return out;
}

RawSequence head_rotation_sequence(const std::vector<Mat3>& neutral, const std::vector<Mat3>& head) {
  RawSequence raw;
  for (std::size_t t = 0; t < head.size(); ++t) {
    ImuFrame f;
    f.host_time_us = t * kFramePeriodUs;
    for (const auto& n : neutral) {
      f.sensors.push_back({{0, 0, 0}, matrix_to_quat(n * head[t].transpose())});
    }
    raw.frames.push_back(f);
  }
  return raw;
}

}  // namespace

TEST_CASE("mag_calibrate symmetric ranges") {
  const auto c = mag_calibrate(box_samples({-1, -1, -1}, {1, 1, 1}));
  CHECK(max_abs_diff(c.offset, {0, 0, 0}) < 1e-15);
  CHECK(max_abs_diff(c.scale, {1, 1, 1}) < 1e-15);
}

TEST_CASE("mag_calibrate uneven ranges") {
  const auto c = mag_calibrate(box_samples({1, -2, -1}, {3, 2, 1}));
  CHECK(max_abs_diff(c.offset, {2, 0, 0}) < 1e-12);
  CHECK(max_abs_diff(c.scale, {4.0 / 3.0, 2.0 / 3.0, 4.0 / 3.0}) < 1e-12);
}

TEST_CASE("mag_calibrate ignores a gross outlier") {
  auto s = box_samples({1, -2, -1}, {3, 2, 1});
  const auto clean = mag_calibrate(s);
  s.push_back({100, 100, 100});
  CHECK(filter_mag_outliers(s).size() == s.size() - 1);
  const auto c = mag_calibrate(s);
  CHECK(max_abs_diff(c.offset, clean.offset) < 1e-12);
  CHECK(max_abs_diff(c.scale, clean.scale) < 1e-12);
}

TEST_CASE("mag_calibrate errors") {
  CHECK_THROWS_AS(mag_calibrate(std::vector<Vec3>{}), CalibrationError);
  std::vector<Vec3> flat{{0, 0, 1}, {1, 1, 1}, {2, 2, 1}};
  CHECK_THROWS_WITH_AS(mag_calibrate(flat), doctest::Contains("axis z"), CalibrationError);
}

TEST_CASE("apply_mag_calibration") {
  const MagCalibration c{{2, 0, 0}, {4.0 / 3.0, 2.0 / 3.0, 4.0 / 3.0}};
  CHECK(max_abs_diff(apply_mag_calibration(c, {3, 2, 1}), {4.0 / 3.0, 4.0 / 3.0, 4.0 / 3.0}) < 1e-15);
  CHECK(max_abs_diff(apply_mag_calibration(c, c.offset), {0, 0, 0}) < 1e-15);
  CHECK(apply_mag_calibration(MagCalibration{}, {5, 6, 7}) == Vec3{5, 6, 7});
}

TEST_CASE("calibrated ranges are equalised") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec3 lo{-u(rng) * 40, -u(rng) * 40, -u(rng) * 40};
    const Vec3 hi{1 + u(rng) * 40, 1 + u(rng) * 40, 1 + u(rng) * 40};
    const auto s = box_samples(lo, hi);
    const auto c = mag_calibrate(s);
    Vec3 mn{1e300, 1e300, 1e300}, mx{-1e300, -1e300, -1e300};
    for (const auto& m : s) {
      const auto v = apply_mag_calibration(c, m);
      for (std::size_t k = 0; k < 3; ++k) {
        mn[k] = std::min(mn[k], v[k]);
        mx[k] = std::max(mx[k], v[k]);
      }
    }
    CHECK(std::abs((mx.x - mn.x) - (mx.y - mn.y)) < 1e-9);
    CHECK(std::abs((mx.x - mn.x) - (mx.z - mn.z)) < 1e-9);
  }
}

TEST_CASE("relative_rotation and align_acceleration") {
  std::mt19937_64 rng(12);
  const auto n = testing::random_rotation(rng);
  CHECK(max_abs_diff(relative_rotation(n, n), Mat3::identity()) < 1e-12);
  const auto r = testing::random_rotation(rng);
  CHECK(max_abs_diff(relative_rotation(Mat3::identity(), r), r) < 1e-15);
  CHECK(max_abs_diff(relative_rotation(n, r), n.transpose() * r) < 1e-12);

  const auto rz = quat_to_matrix(quat_from_axis_angle({0, 0, 1}, M_PI / 2));
  CHECK(max_abs_diff(align_acceleration(rz, {1, 0, 0}), {0, -1, 0}) < 1e-15);
  const Vec3 a{0.3, -2.0, 9.81};
  CHECK(align_acceleration(Mat3::identity(), a) == a);
  CHECK(std::abs(norm(align_acceleration(r, a)) - norm(a)) < 1e-12);
}

TEST_CASE("head_compensate_frame matches matrix oracle") {
  std::mt19937_64 rng(13);
  CalibrationProfile profile;
  for (int i = 0; i < 12; ++i) profile.neutral.push_back(testing::random_rotation(rng));
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Mat3> rels;
    std::vector<Vec3> aligned;
    for (int i = 0; i < 12; ++i) {
      rels.push_back(testing::random_rotation(rng));
      aligned.push_back(testing::random_vec(rng, 5.0));
    }
    const auto lit = head_compensate_frame(profile, rels, aligned, AccHeadComp::literal);
    const auto inv = head_compensate_frame(profile, rels, aligned, AccHeadComp::inverse);
    CHECK(max_abs_diff(lit[0].rotation, rels[0]) == 0.0);
    CHECK(lit[0].acceleration == aligned[0]);
    for (int i = 1; i < 12; ++i) {
      CHECK(max_abs_diff(lit[i].rotation, rels[0].transpose() * rels[i]) < 1e-12);
      CHECK(max_abs_diff(lit[i].acceleration, rels[0].transpose() * aligned[i]) < 1e-12);
      CHECK(max_abs_diff(inv[i].acceleration, rels[0] * aligned[i]) < 1e-12);
    }
  }
  std::vector<Mat3> same(12, testing::random_rotation(rng));
  std::vector<Vec3> zero(12);
  const auto comp = head_compensate_frame(profile, same, zero);
  for (std::size_t i = 1; i < comp.size(); ++i) {
    CHECK(max_abs_diff(comp[i].rotation, Mat3::identity()) < 1e-12);
  }
  std::vector<Mat3> eye(12, Mat3::identity());
  const auto passthrough = head_compensate_frame(profile, eye, zero);
  CHECK(passthrough.size() == 12);
}

TEST_CASE("pure head rotation cancels") {
  std::mt19937_64 rng(14);
  std::vector<Mat3> neutral;
  for (int i = 0; i < 12; ++i) neutral.push_back(testing::random_rotation(rng));
  std::vector<Mat3> head;
  for (int t = 0; t < 60; ++t) head.push_back(testing::random_rotation(rng));
  const auto raw = head_rotation_sequence(neutral, head);
  CalibrationProfile profile;
  profile.neutral = neutral;
  const auto cal = calibrate_sequence(profile, raw);
  for (const auto& f : cal.frames) {
    for (std::size_t i = 1; i < f.sensors.size(); ++i) {
      CHECK((quat_to_matrix(f.sensors[i].orientation) - Mat3::identity()).frobenius_norm() < 1e-9);
    }
  }
}

TEST_CASE("calibrate_frame matches per-op oracle") {
  std::mt19937_64 rng(15);
  CalibrationProfile profile;
  for (int i = 0; i < 12; ++i) profile.neutral.push_back(testing::random_rotation(rng));
  ImuFrame raw;
  for (int i = 0; i < 12; ++i) raw.sensors.push_back({testing::random_vec(rng, 9.0), testing::random_quat(rng)});
  const auto out = calibrate_frame(profile, raw);
  const auto raw0 = quat_to_matrix(raw.sensors[0].orientation);
  const auto rel0 = profile.neutral[0].transpose() * raw0;
  for (int i = 1; i < 12; ++i) {
    const auto ri = quat_to_matrix(raw.sensors[i].orientation);
    const auto reli = profile.neutral[i].transpose() * ri;
    const auto q = matrix_to_quat(rel0.transpose() * reli);
    CHECK(quat_angle_between(out.sensors[i].orientation, q) < 1e-7);
    CHECK(out.sensors[i].orientation.w >= 0.0);
    const auto a = rel0.transpose() * (ri.transpose() * raw.sensors[i].acceleration);
    CHECK(max_abs_diff(out.sensors[i].acceleration, a) < 1e-12);
  }
}

TEST_CASE("neutral input calibrates to identity") {
  std::mt19937_64 rng(16);
  CalibrationProfile profile;
  RawSequence raw;
  ImuFrame f;
  for (int i = 0; i < 12; ++i) {
    profile.neutral.push_back(testing::random_rotation(rng));
    f.sensors.push_back({{0, 0, 0}, matrix_to_quat(profile.neutral.back())});
  }
  raw.frames.assign(5, f);
  const auto cal = calibrate_sequence(profile, raw);
  for (const auto& fr : cal.frames) {
    for (const auto& s : fr.sensors) {
      CHECK(quat_angle_between(s.orientation, Quaternion::identity()) < 1e-7);
      CHECK(norm(s.acceleration) == 0.0);
    }
  }
}

TEST_CASE("calibration is thread-count invariant") {
  std::mt19937_64 rng(17);
  CalibrationProfile profile;
  for (int i = 0; i < 12; ++i) profile.neutral.push_back(testing::random_rotation(rng));
  RawSequence raw;
  for (int t = 0; t < 257; ++t) {
    ImuFrame f;
    f.host_time_us = t * kFramePeriodUs;
    for (int i = 0; i < 12; ++i) f.sensors.push_back({testing::random_vec(rng, 9.0), testing::random_quat(rng)});
    raw.frames.push_back(f);
  }
  const auto one = calibrate_sequence(profile, raw, {AccHeadComp::literal, 1});
  const auto four = calibrate_sequence(profile, raw, {AccHeadComp::literal, 4});
  REQUIRE(one.frame_count() == four.frame_count());
  for (std::size_t t = 0; t < one.frame_count(); ++t) {
    for (std::size_t i = 0; i < 12; ++i) {
      CHECK(one.frames[t].sensors[i].orientation == four.frames[t].sensors[i].orientation);
      CHECK(one.frames[t].sensors[i].acceleration == four.frames[t].sensors[i].acceleration);
    }
  }
}

TEST_CASE("calibrate_sequence rejects a sensor-count mismatch") {
  CalibrationProfile profile;
  profile.neutral.assign(3, Mat3::identity());
  RawSequence raw;
  raw.frames.push_back({0.0, std::vector<ImuSample>(2)});
  CHECK_THROWS_AS(calibrate_sequence(profile, raw), CalibrationError);
}

TEST_CASE("profile json round trip") {
  std::mt19937_64 rng(18);
  CalibrationProfile p;
  for (int i = 0; i < 4; ++i) p.neutral.push_back(testing::random_rotation(rng));
  p.mag.assign(4, MagCalibration{{1, 2, 3}, {1, 0.5, 2}});
  const auto back = profile_from_json(profile_to_json(p));
  CHECK(back.neutral == p.neutral);
  CHECK(back.mag.size() == 4);
  CHECK(back.mag[2].scale == p.mag[2].scale);
  CHECK_THROWS_AS(profile_from_json("{\"neutral\": [[1,2]]}"), FormatError);
  CHECK_THROWS_AS(load_profile("/nonexistent/profile.json"), IoError);
}
