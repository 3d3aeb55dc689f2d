#pragma once

#include <Eigen/Core>
#include <cmath>

namespace sdd {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat34 = Eigen::Matrix<double, 3, 4>;
using Mat23 = Eigen::Matrix<double, 2, 3>;

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

// Quaternions are stored (w, x, y, z).
inline Vec4 quat_mul(const Vec4& a, const Vec4& b) {
  return Vec4(a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
              a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
              a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
              a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]);
}

inline Vec4 quat_normalized(const Vec4& q) {
  double n = q.norm();
  if (n == 0.0) return Vec4(1, 0, 0, 0);
  return q / n;
}

inline Mat3 quat_to_rotmat(const Vec4& q) {
  double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r(0, 0) = 1 - 2 * (y * y + z * z);
  r(0, 1) = 2 * (x * y - w * z);
  r(0, 2) = 2 * (x * z + w * y);
  r(1, 0) = 2 * (x * y + w * z);
  r(1, 1) = 1 - 2 * (x * x + z * z);
  r(1, 2) = 2 * (y * z - w * x);
  r(2, 0) = 2 * (x * z - w * y);
  r(2, 1) = 2 * (y * z + w * x);
  r(2, 2) = 1 - 2 * (x * x + y * y);
  return r;
}

// Axis-angle vector to quaternion, with a series branch near zero so the
// map and its derivatives stay smooth where deformations start (at zero).
inline Vec4 quat_from_rotvec(const Vec3& r) {
  double theta2 = r.squaredNorm();
  double theta = std::sqrt(theta2);
  double half = 0.5 * theta;
  double w, k;
  if (theta < 1e-8) {
    w = 1.0 - theta2 / 8.0;
    k = 0.5 - theta2 / 48.0;
  } else {
    w = std::cos(half);
    k = std::sin(half) / theta;
  }
  return Vec4(w, k * r[0], k * r[1], k * r[2]);
}

}  // namespace sdd
