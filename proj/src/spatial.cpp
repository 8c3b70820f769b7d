// SPDX-License-Identifier: Apache-2.0
#include "presence/spatial.hpp"

#include <numbers>
#include <string>

#include "presence/errors.hpp"

namespace presence {

Quat Quat::about_y(double radians) {
  return {std::cos(radians / 2), 0.0, std::sin(radians / 2), 0.0};
}

Quat Quat::from_axis_angle(const Vec3& axis, double radians) {
  const double n = axis.norm();
  if (n == 0.0) throw DomainError("rotation axis must be non-zero");
  const double s = std::sin(radians / 2) / n;
  return {std::cos(radians / 2), axis.x * s, axis.y * s, axis.z * s};
}

Quat Quat::operator*(const Quat& o) const {
  return {w * o.w - x * o.x - y * o.y - z * o.z,
          w * o.x + x * o.w + y * o.z - z * o.y,
          w * o.y - x * o.z + y * o.w + z * o.x,
          w * o.z + x * o.y - y * o.x + z * o.w};
}

Quat Quat::normalized() const {
  const double n = norm();
  if (n == 0.0 || !std::isfinite(n)) throw DomainError("cannot normalize degenerate quaternion");
  return {w / n, x / n, y / n, z / n};
}

Vec3 Quat::rotate(const Vec3& v) const {
  // v' = v + 2w (u x v) + 2 u x (u x v), u = (x, y, z)
  const Vec3 u{x, y, z};
  const Vec3 t = u.cross(v) * 2.0;
  return v + t * w + u.cross(t);
}

bool is_valid_pose(const Pose& pose, double norm_tolerance) {
  return pose.position.finite() && std::abs(pose.orientation.norm() - 1.0) <= norm_tolerance;
}

void PlaySpace::validate() const {
  if (!(width > 0.0) || !(depth > 0.0)) throw DomainError("play space dimensions must be positive");
}

RigidTransform RigidTransform::inverse() const {
  const Quat inv = rotation.conjugate();
  return {inv, -inv.rotate(translation)};
}

double RigidTransform::yaw() const {
  return 2.0 * std::atan2(rotation.y, rotation.w);
}

void BodyKernel::validate() const {
  if (!(sigma > 0.0)) throw DomainError("kernel sigma must be positive");
  if (!(base_luminosity > 0.0)) throw DomainError("base luminosity must be positive");
  if (!(pair_gain >= 0.0)) throw DomainError("pair gain must be non-negative");
}

RigidTransform radial_transform(int node_index, int n_participants) {
  if (n_participants < 1) throw DomainError("n_participants must be >= 1");
  if (node_index < 0 || node_index >= n_participants) {
    throw DomainError("node_index " + std::to_string(node_index) + " out of range for " +
                      std::to_string(n_participants) + " participants");
  }
  const double angle = 2.0 * std::numbers::pi * node_index / n_participants;
  return {Quat::about_y(angle), Vec3{}};
}

Pose to_shared(const Pose& local, const RigidTransform& t) {
  return {t.apply(local.position), (t.rotation * local.orientation).normalized()};
}

double pair_overlap(const Vec3& a, const Vec3& b, const BodyKernel& kernel) {
  const double d2 = (a - b).squared_norm();
  return std::exp(-d2 / (4.0 * kernel.sigma * kernel.sigma));
}

double group_luminosity(std::span<const Vec3> centers, const BodyKernel& kernel) {
  double pairs = 0.0;
  for (std::size_t i = 0; i < centers.size(); ++i) {
    for (std::size_t j = i + 1; j < centers.size(); ++j) {
      pairs += pair_overlap(centers[i], centers[j], kernel);
    }
  }
  return static_cast<double>(centers.size()) * kernel.base_luminosity + kernel.pair_gain * pairs;
}

std::vector<double> body_luminosities(std::span<const Vec3> centers, const BodyKernel& kernel) {
  std::vector<double> out(centers.size(), kernel.base_luminosity);
  for (std::size_t i = 0; i < centers.size(); ++i) {
    for (std::size_t j = i + 1; j < centers.size(); ++j) {
      const double half = 0.5 * kernel.pair_gain * pair_overlap(centers[i], centers[j], kernel);
      out[i] += half;
      out[j] += half;
    }
  }
  return out;
}

Vec3 body_center(const Pose& head, const BodyKernel& kernel) {
  return head.position + Vec3{0.0, kernel.center_offset_y, 0.0};
}

}  // namespace presence
