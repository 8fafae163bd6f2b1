#pragma once

#include <cmath>
#include <random>

#include "facecap/geom.hpp"

namespace testing {

inline facecap::Quaternion random_quat(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  facecap::Quaternion q{n(rng), n(rng), n(rng), n(rng)};
  return q.normalized();
}

inline facecap::Vec3 random_vec(std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng), u(rng)};
}

inline facecap::Mat3 random_rotation(std::mt19937_64& rng) {
  return facecap::quat_to_matrix(random_quat(rng));
}

inline double max_abs_diff(const facecap::Mat3& a, const facecap::Mat3& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < 9; ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

inline double max_abs_diff(const facecap::Vec3& a, const facecap::Vec3& b) {
  return std::max({std::abs(a.x - b.x), std::abs(a.y - b.y), std::abs(a.z - b.z)});
}

// Textbook conversion, used as an independent oracle.
inline facecap::Mat3 matrix_oracle(const facecap::Quaternion& q) {
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  return facecap::Mat3({1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
                        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
                        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)});
}

}  // namespace testing
