#include "facecap/geom.hpp"

#include <algorithm>

namespace facecap {

Vec3 normalize(const Vec3& v) {
  const double n = norm(v);
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw GeometryError("cannot normalize a zero or non-finite vector");
  }
  return v / n;
}

Mat3 Mat3::from_columns(const Vec3& c0, const Vec3& c1, const Vec3& c2) {
  return Mat3({c0.x, c1.x, c2.x, c0.y, c1.y, c2.y, c0.z, c1.z, c2.z});
}

Mat3 Mat3::from_rows(const Vec3& r0, const Vec3& r1, const Vec3& r2) {
  return Mat3({r0.x, r0.y, r0.z, r1.x, r1.y, r1.z, r2.x, r2.y, r2.z});
}

Mat3 Mat3::transpose() const {
  const auto& a = m_;
  return Mat3({a[0], a[3], a[6], a[1], a[4], a[7], a[2], a[5], a[8]});
}

double Mat3::determinant() const {
  const auto& a = m_;
  return a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6]) +
         a[2] * (a[3] * a[7] - a[4] * a[6]);
}

Mat3 Mat3::operator*(const Mat3& o) const {
  Mat3 out;
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 3; ++c) {
      out(r, c) = (*this)(r, 0) * o(0, c) + (*this)(r, 1) * o(1, c) + (*this)(r, 2) * o(2, c);
    }
  }
  return out;
}

Vec3 Mat3::operator*(const Vec3& v) const {
  const auto& a = m_;
  return {a[0] * v.x + a[1] * v.y + a[2] * v.z, a[3] * v.x + a[4] * v.y + a[5] * v.z,
          a[6] * v.x + a[7] * v.y + a[8] * v.z};
}

Mat3 Mat3::operator-(const Mat3& o) const {
  Mat3 out;
  for (std::size_t i = 0; i < 9; ++i) out.m_[i] = m_[i] - o.m_[i];
  return out;
}

double Mat3::frobenius_norm() const {
  double s = 0.0;
  for (double v : m_) s += v * v;
  return std::sqrt(s);
}

bool Mat3::is_proper_rotation(double tol) const {
  for (double v : m_) {
    if (!std::isfinite(v)) return false;
  }
  const Mat3 gram = transpose() * (*this);
  const Mat3 eye = identity();
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 3; ++c) {
      if (std::abs(gram(r, c) - eye(r, c)) > tol) return false;
    }
  }
  return std::abs(determinant() - 1.0) <= tol;
}

Quaternion canonical(const Quaternion& q) {
  bool flip = q.w < 0.0;
  if (q.w == 0.0) {
    if (q.x != 0.0) {
      flip = q.x < 0.0;
    } else if (q.y != 0.0) {
      flip = q.y < 0.0;
    } else {
      flip = q.z < 0.0;
    }
  }
  return flip ? Quaternion{-q.w, -q.x, -q.y, -q.z} : q;
}

Quaternion Quaternion::normalized() const {
  const double n = norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw GeometryError("cannot normalize a zero or non-finite quaternion");
  }
  return canonical({w / n, x / n, y / n, z / n});
}

Quaternion quat_multiply(const Quaternion& a, const Quaternion& b) {
  return canonical({a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
                    a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
                    a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
                    a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w});
}

Quaternion quat_inverse(const Quaternion& q) {
  const double n2 = q.w * q.w + q.x * q.x + q.y * q.y + q.z * q.z;
  if (!(n2 > 0.0)) throw GeometryError("cannot invert a zero quaternion");
  const Quaternion c = q.conjugate();
  return canonical({c.w / n2, c.x / n2, c.y / n2, c.z / n2});
}

RotationMatrix quat_to_matrix(const Quaternion& q) {
  const double n = q.norm();
  if (!std::isfinite(n) || std::abs(n - 1.0) > 1e-6) {
    throw GeometryError("quat_to_matrix: quaternion norm " + std::to_string(n) +
                        " is not within 1e-6 of 1");
  }
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  return Mat3({1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
               2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
               2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)});
}

Quaternion matrix_to_quat(const RotationMatrix& r) {
  if (!r.is_proper_rotation(1e-6)) {
    throw GeometryError("matrix_to_quat: input is not a proper rotation");
  }
  // Shepperd: branch on the largest of (trace, diagonal) for conditioning.
  const double m00 = r(0, 0), m11 = r(1, 1), m22 = r(2, 2);
  const double trace = m00 + m11 + m22;
  Quaternion q;
  if (trace >= m00 && trace >= m11 && trace >= m22) {
    const double s = 2.0 * std::sqrt(1.0 + trace);
    q = {0.25 * s, (r(2, 1) - r(1, 2)) / s, (r(0, 2) - r(2, 0)) / s, (r(1, 0) - r(0, 1)) / s};
  } else if (m00 >= m11 && m00 >= m22) {
    const double s = 2.0 * std::sqrt(1.0 + m00 - m11 - m22);
    q = {(r(2, 1) - r(1, 2)) / s, 0.25 * s, (r(0, 1) + r(1, 0)) / s, (r(0, 2) + r(2, 0)) / s};
  } else if (m11 >= m22) {
    const double s = 2.0 * std::sqrt(1.0 + m11 - m00 - m22);
    q = {(r(0, 2) - r(2, 0)) / s, (r(0, 1) + r(1, 0)) / s, 0.25 * s, (r(1, 2) + r(2, 1)) / s};
  } else {
    const double s = 2.0 * std::sqrt(1.0 + m22 - m00 - m11);
    q = {(r(1, 0) - r(0, 1)) / s, (r(0, 2) + r(2, 0)) / s, (r(1, 2) + r(2, 1)) / s, 0.25 * s};
  }
  return q.normalized();
}

Quaternion slerp(const Quaternion& a, const Quaternion& b, double t) {
  t = std::clamp(t, 0.0, 1.0);
  Quaternion bb = b;
  double d = a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z;
  if (d < 0.0) {
    bb = {-b.w, -b.x, -b.y, -b.z};
    d = -d;
  }
  double wa = 1.0 - t;
  double wb = t;
  if (d < 1.0 - 1e-12) {
    const double theta = std::acos(std::min(d, 1.0));
    const double s = std::sin(theta);
    wa = std::sin((1.0 - t) * theta) / s;
    wb = std::sin(t * theta) / s;
  }
  return Quaternion{wa * a.w + wb * bb.w, wa * a.x + wb * bb.x, wa * a.y + wb * bb.y,
                    wa * a.z + wb * bb.z}
      .normalized();
}

Quaternion quat_from_axis_angle(const Vec3& axis, double angle) {
  const Vec3 u = normalize(axis);
  const double h = 0.5 * angle;
  const double s = std::sin(h);
  return Quaternion{std::cos(h), u.x * s, u.y * s, u.z * s}.normalized();
}

Quaternion quat_from_rotation_vector(const Vec3& rv) {
  const double angle = norm(rv);
  if (angle == 0.0) return Quaternion::identity();
  return quat_from_axis_angle(rv, angle);
}

double quat_angle_between(const Quaternion& a, const Quaternion& b) {
  // atan2 form keeps precision for tiny angles where acos(dot) does not.
  const Quaternion d = quat_multiply(a.conjugate(), b);
  const double vec = std::sqrt(d.x * d.x + d.y * d.y + d.z * d.z);
  return 2.0 * std::atan2(vec, std::abs(d.w));
}

Vec3 rotate(const Quaternion& q, const Vec3& v) { return quat_to_matrix(q) * v; }

}  // namespace facecap
