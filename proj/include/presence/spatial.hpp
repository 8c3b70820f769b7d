// SPDX-License-Identifier: Apache-2.0
//
// Composition of remote play spaces into one shared world, and the
// luminosity model driven by overlapping bodies.
//
// Conventions: right-handed, y-up, meters. Positive rotation about +y is
// counterclockwise when viewed from above.
#pragma once

#include <cmath>
#include <span>
#include <vector>

namespace presence {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  Vec3& operator-=(const Vec3& o) {
    x -= o.x;
    y -= o.y;
    z -= o.z;
    return *this;
  }
  constexpr bool operator==(const Vec3&) const = default;

  constexpr double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  constexpr Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  constexpr double squared_norm() const { return dot(*this); }
  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

inline constexpr Vec3 operator*(double s, const Vec3& v) { return v * s; }

/// Rotation quaternion, (w, x, y, z) order.
struct Quat {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  static Quat identity() { return {}; }
  static Quat about_y(double radians);
  static Quat from_axis_angle(const Vec3& axis, double radians);

  Quat operator*(const Quat& o) const;
  Quat conjugate() const { return {w, -x, -y, -z}; }
  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }
  Quat normalized() const;
  Vec3 rotate(const Vec3& v) const;
  bool operator==(const Quat&) const = default;
};

struct Pose {
  Vec3 position;
  Quat orientation;
  bool operator==(const Pose&) const = default;
};

/// Validates a pose: finite position and unit orientation (1e-6).
bool is_valid_pose(const Pose& pose, double norm_tolerance = 1e-6);

struct PlaySpace {
  double width = 2.0;  // short axis
  double depth = 3.0;  // long axis
  void validate() const;
};

struct RigidTransform {
  Quat rotation;
  Vec3 translation;

  Vec3 apply(const Vec3& p) const { return rotation.rotate(p) + translation; }
  RigidTransform inverse() const;
  /// Rotation about +y in radians, in (-pi, pi].
  double yaw() const;
};

/// Diffuse Gaussian "energetic body".
struct BodyKernel {
  double sigma = 0.35;
  double base_luminosity = 1.0;
  double pair_gain = 1.0;
  /// Body center relative to the tracked head, along y.
  double center_offset_y = -0.4;
  void validate() const;
};

/// Frame of node `node_index` among `n_participants` radially arranged
/// nodes: rotation of node_index * 360/n degrees about +y, shared center.
/// Throws DomainError when node_index >= n_participants or n < 1.
RigidTransform radial_transform(int node_index, int n_participants);

/// Expresses a node-local pose in the shared frame.
Pose to_shared(const Pose& local, const RigidTransform& t);

/// Normalized cross-correlation of two Gaussian bodies: exp(-d^2 / 4 sigma^2).
double pair_overlap(const Vec3& a, const Vec3& b, const BodyKernel& kernel);

/// n * base + gain * sum over pairs of pair_overlap.
double group_luminosity(std::span<const Vec3> centers, const BodyKernel& kernel);

/// Per-body share of group_luminosity: base + gain/2 * sum_{j != i} overlap.
/// The shares sum to group_luminosity.
std::vector<double> body_luminosities(std::span<const Vec3> centers, const BodyKernel& kernel);

Vec3 body_center(const Pose& head, const BodyKernel& kernel);

}  // namespace presence
