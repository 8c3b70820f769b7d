// SPDX-License-Identifier: Apache-2.0
//
// Interactive bead-spring ring polymer. Harmonic bonds between consecutive
// beads, harmonic angles at every bead, and clamped user springs that pull a
// bead toward a pinch point. Unit bead mass, reduced units throughout.
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "presence/spatial.hpp"

namespace presence {

struct RingTopology {
  int n_beads = 40;
  double rest_length = 0.15;
  double bond_stiffness = 500.0;
  double angle_stiffness = 5.0;
  double rest_angle = 0.9 * 3.14159265358979323846;  // pi * (1 - 2/40)

  /// Topology with the regular-polygon interior angle pi * (1 - 2/n).
  static RingTopology regular(int n_beads, double rest_length = 0.15);
  void validate() const;
  /// Radius at which equally spaced beads are exactly rest_length apart.
  double rest_radius() const;
};

struct SimState {
  std::vector<Vec3> positions;
  std::vector<Vec3> velocities;
  double time = 0.0;
  double scale = 1.0;
  std::uint64_t step = 0;

  std::size_t size() const { return positions.size(); }
  bool operator==(const SimState&) const = default;
};

struct InteractionForce {
  std::uint32_t owner = 0;
  std::size_t target_bead = 0;
  Vec3 anchor;  // simulation coordinates
  double stiffness = 100.0;
  double max_force = 25.0;
};

struct IntegratorParams {
  double dt = 0.002;
  double friction = 5.0;
  double kT = 0.1;
  std::uint64_t rng_seed = 1;
  void validate() const;
};

/// Center of the ring in simulation coordinates.
inline constexpr Vec3 kRingCenter{0.0, 1.0, 0.0};

/// Equal-arc placement on a circle of radius `radius` (<= 0: circumference
/// n * r0) in the y = 1 plane. This is the unrelaxed layout.
SimState ring_layout(const RingTopology& topo, double radius);

/// Ring at rest geometry. `radius_hint` seeds the equal-arc layout, which is
/// then relaxed radially so every bond is exactly r0.
SimState build_ring(const RingTopology& topo, double radius_hint = 0.0);

/// Total force on every bead.
std::vector<Vec3> forces(std::span<const Vec3> positions, const RingTopology& topo,
                         std::span<const InteractionForce> interactions);

/// Bond + angle + interaction potential. Interaction springs contribute
/// 1/2 k d^2 below the clamp and a linear continuation above it.
double potential_energy(std::span<const Vec3> positions, const RingTopology& topo,
                        std::span<const InteractionForce> interactions);

double kinetic_energy(std::span<const Vec3> velocities);

/// One BAOAB Langevin step. With friction = 0 and kT = 0 this reduces to
/// velocity Verlet. Noise is keyed by (seed, step, bead).
/// Throws IntegrationBlowup naming the first non-finite bead.
SimState step(const SimState& state, const RingTopology& topo,
              std::span<const InteractionForce> interactions, const IntegratorParams& ip);

/// Nearest bead (in scaled coordinates) within grab_radius of `point`;
/// ties go to the lowest index.
std::optional<std::size_t> pick_bead(const SimState& state, const Vec3& point, double grab_radius);

/// Replaces the render scale. Throws DomainError for s <= 0.
SimState set_scale(const SimState& state, double s);

/// Standard normal deviate that depends only on its key.
double keyed_normal(std::uint64_t seed, std::uint64_t step, std::uint64_t bead, int component);

}  // namespace presence
