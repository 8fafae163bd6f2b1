#pragma once

// Rotation algebra shared by every stage of the pipeline.
//
// Conventions:
//   - Quaternions are scalar-first Hamilton quaternions (w, x, y, z).
//   - Every quaternion returned by this module is sign-canonical (w >= 0).
//   - Rotation matrices are row-major. When a matrix describes a sensor
//     attitude it maps WORLD coordinates into the SENSOR frame.

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace facecap {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  constexpr Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  constexpr Vec3& operator-=(const Vec3& o) {
    x -= o.x;
    y -= o.y;
    z -= o.z;
    return *this;
  }
  constexpr bool operator==(const Vec3&) const = default;

  constexpr double operator[](std::size_t i) const { return i == 0 ? x : (i == 1 ? y : z); }
  constexpr double& operator[](std::size_t i) { return i == 0 ? x : (i == 1 ? y : z); }

  bool is_finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

constexpr Vec3 operator*(double s, const Vec3& v) { return v * s; }

constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }

/// Throws std::domain_error for a (near) zero vector.
Vec3 normalize(const Vec3& v);

/// General 3x3 matrix, row-major. Used both for proper rotations and for the
/// (possibly singular) literal sensor-frame construction in facesim.
class Mat3 {
 public:
  constexpr Mat3() = default;
  constexpr explicit Mat3(const std::array<double, 9>& row_major) : m_(row_major) {}

  static constexpr Mat3 identity() { return Mat3({1, 0, 0, 0, 1, 0, 0, 0, 1}); }
  static Mat3 from_columns(const Vec3& c0, const Vec3& c1, const Vec3& c2);
  static Mat3 from_rows(const Vec3& r0, const Vec3& r1, const Vec3& r2);

  constexpr double operator()(std::size_t r, std::size_t c) const { return m_[r * 3 + c]; }
  constexpr double& operator()(std::size_t r, std::size_t c) { return m_[r * 3 + c]; }

  Vec3 row(std::size_t r) const { return {m_[r * 3], m_[r * 3 + 1], m_[r * 3 + 2]}; }
  Vec3 column(std::size_t c) const { return {m_[c], m_[3 + c], m_[6 + c]}; }

  const std::array<double, 9>& data() const { return m_; }

  Mat3 transpose() const;
  double determinant() const;

  Mat3 operator*(const Mat3& o) const;
  Vec3 operator*(const Vec3& v) const;
  Mat3 operator-(const Mat3& o) const;
  bool operator==(const Mat3&) const = default;

  double frobenius_norm() const;

  /// Orthonormal with determinant +1, each within `tol`.
  bool is_proper_rotation(double tol = 1e-9) const;

 private:
  std::array<double, 9> m_{};
};

using RotationMatrix = Mat3;

struct Quaternion {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  static constexpr Quaternion identity() { return {1.0, 0.0, 0.0, 0.0}; }

  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }
  constexpr Quaternion conjugate() const { return {w, -x, -y, -z}; }
  /// Unit-norm, sign-canonical copy. Throws std::domain_error on a zero quaternion.
  Quaternion normalized() const;
  bool is_finite() const {
    return std::isfinite(w) && std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
  }
  constexpr bool operator==(const Quaternion&) const = default;
};

/// Flip sign so that w >= 0 (ties broken on the first non-zero vector part).
Quaternion canonical(const Quaternion& q);

/// Hamilton product a * b, sign-canonical.
Quaternion quat_multiply(const Quaternion& a, const Quaternion& b);

/// Inverse of a non-zero quaternion.
Quaternion quat_inverse(const Quaternion& q);

/// Rotation matrix of a unit quaternion. Rejects |q| outside 1 +- 1e-6.
RotationMatrix quat_to_matrix(const Quaternion& q);

/// Canonical (w >= 0) unit quaternion of a proper rotation. Rejects matrices
/// that are not orthonormal with det +1 within 1e-6.
Quaternion matrix_to_quat(const RotationMatrix& r);

/// Spherical interpolation, t in [0, 1]. Antipodal inputs are resolved by
/// flipping b onto a's hemisphere.
Quaternion slerp(const Quaternion& a, const Quaternion& b, double t);

/// Rotation by `angle` radians about `axis` (normalized internally).
Quaternion quat_from_axis_angle(const Vec3& axis, double angle);

/// Rotation vector (axis * angle) to quaternion; zero vector maps to identity.
Quaternion quat_from_rotation_vector(const Vec3& rv);

/// Geodesic angle between the rotations represented by a and b, in radians.
double quat_angle_between(const Quaternion& a, const Quaternion& b);

/// Rotates v by unit quaternion q.
Vec3 rotate(const Quaternion& q, const Vec3& v);

class GeometryError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace facecap
