// SPDX-License-Identifier: Apache-2.0
#include "presence/simdyn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "presence/errors.hpp"

namespace presence {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double unit_open(std::uint64_t bits) {
  // (0, 1), never exactly zero
  return (static_cast<double>(bits >> 11) + 0.5) * (1.0 / 9007199254740992.0);
}

Vec3 clamp_magnitude(const Vec3& f, double max_norm) {
  const double n = f.norm();
  if (n > max_norm) return f * (max_norm / n);
  return f;
}

}  // namespace

RingTopology RingTopology::regular(int n_beads, double rest_length) {
  RingTopology t;
  t.n_beads = n_beads;
  t.rest_length = rest_length;
  t.rest_angle = std::numbers::pi * (1.0 - 2.0 / n_beads);
  return t;
}

void RingTopology::validate() const {
  if (n_beads < 3) throw DomainError("ring requires at least 3 beads");
  if (!(rest_length > 0.0)) throw DomainError("rest length must be positive");
  if (!(bond_stiffness > 0.0)) throw DomainError("bond stiffness must be positive");
  if (!(angle_stiffness >= 0.0)) throw DomainError("angle stiffness must be non-negative");
}

double RingTopology::rest_radius() const {
  return rest_length / (2.0 * std::sin(std::numbers::pi / n_beads));
}

void IntegratorParams::validate() const {
  if (!(dt > 0.0)) throw DomainError("dt must be positive");
  if (!(friction >= 0.0)) throw DomainError("friction must be non-negative");
  if (!(kT >= 0.0)) throw DomainError("kT must be non-negative");
}

SimState ring_layout(const RingTopology& topo, double radius) {
  topo.validate();
  const auto n = static_cast<std::size_t>(topo.n_beads);
  if (radius <= 0.0) radius = n * topo.rest_length / (2.0 * std::numbers::pi);
  SimState s;
  s.positions.resize(n);
  s.velocities.assign(n, Vec3{});
  for (std::size_t i = 0; i < n; ++i) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
    s.positions[i] = kRingCenter + Vec3{radius * std::cos(a), 0.0, radius * std::sin(a)};
  }
  return s;
}

SimState build_ring(const RingTopology& topo, double radius_hint) {
  SimState s = ring_layout(topo, radius_hint);
  const double target = topo.rest_radius();
  for (auto& p : s.positions) {
    const Vec3 radial = p - kRingCenter;
    p = kRingCenter + radial * (target / radial.norm());
  }
  return s;
}

std::vector<Vec3> forces(std::span<const Vec3> x, const RingTopology& topo,
                         std::span<const InteractionForce> interactions) {
  const std::size_t n = x.size();
  std::vector<Vec3> f(n);

  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = (i + 1) % n;
    const Vec3 r = x[j] - x[i];
    const double len = r.norm();
    if (len == 0.0) continue;
    // force on j: -k (|r| - r0) r_hat
    const Vec3 fj = r * (-topo.bond_stiffness * (len - topo.rest_length) / len);
    f[j] += fj;
    f[i] -= fj;
  }

  if (topo.angle_stiffness > 0.0) {
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t i = (j + n - 1) % n;
      const std::size_t k = (j + 1) % n;
      const Vec3 u = x[i] - x[j];
      const Vec3 v = x[k] - x[j];
      const double lu = u.norm();
      const double lv = v.norm();
      if (lu == 0.0 || lv == 0.0) continue;
      const double c = std::clamp(u.dot(v) / (lu * lv), -1.0, 1.0);
      const double theta = std::acos(c);
      const double sin_theta = std::max(std::sqrt(1.0 - c * c), 1e-12);
      // F = -dV/dtheta * dtheta/dc * dc/dx, dtheta/dc = -1/sin
      const double coeff = topo.angle_stiffness * (theta - topo.rest_angle) / sin_theta;
      const Vec3 dc_du = v / (lu * lv) - u * (c / (lu * lu));
      const Vec3 dc_dv = u / (lu * lv) - v * (c / (lv * lv));
      const Vec3 fi = dc_du * coeff;
      const Vec3 fk = dc_dv * coeff;
      f[i] += fi;
      f[k] += fk;
      f[j] -= fi + fk;
    }
  }

  for (const auto& it : interactions) {
    if (it.target_bead >= n) continue;
    const Vec3 pull = (it.anchor - x[it.target_bead]) * it.stiffness;
    f[it.target_bead] += clamp_magnitude(pull, it.max_force);
  }
  return f;
}

double potential_energy(std::span<const Vec3> x, const RingTopology& topo,
                        std::span<const InteractionForce> interactions) {
  const std::size_t n = x.size();
  double e = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = (x[(i + 1) % n] - x[i]).norm() - topo.rest_length;
    e += 0.5 * topo.bond_stiffness * d * d;
  }
  for (std::size_t j = 0; j < n; ++j) {
    const Vec3 u = x[(j + n - 1) % n] - x[j];
    const Vec3 v = x[(j + 1) % n] - x[j];
    const double c = std::clamp(u.dot(v) / (u.norm() * v.norm()), -1.0, 1.0);
    const double d = std::acos(c) - topo.rest_angle;
    e += 0.5 * topo.angle_stiffness * d * d;
  }
  for (const auto& it : interactions) {
    if (it.target_bead >= n || it.stiffness == 0.0) continue;
    const double d = (it.anchor - x[it.target_bead]).norm();
    const double d_clamp = it.max_force / it.stiffness;
    if (d <= d_clamp) {
      e += 0.5 * it.stiffness * d * d;
    } else {
      e += 0.5 * it.stiffness * d_clamp * d_clamp + it.max_force * (d - d_clamp);
    }
  }
  return e;
}

double kinetic_energy(std::span<const Vec3> v) {
  double e = 0.0;
  for (const auto& vi : v) e += 0.5 * vi.squared_norm();
  return e;
}

double keyed_normal(std::uint64_t seed, std::uint64_t step_index, std::uint64_t bead, int component) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ step_index);
  h = splitmix64(h ^ (bead * 4 + static_cast<std::uint64_t>(component)));
  const double u1 = unit_open(h);
  const double u2 = unit_open(splitmix64(h));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

SimState step(const SimState& state, const RingTopology& topo,
              std::span<const InteractionForce> interactions, const IntegratorParams& ip) {
  const double dt = ip.dt;
  const double half = 0.5 * dt;
  SimState next = state;
  auto& x = next.positions;
  auto& v = next.velocities;
  const std::size_t n = x.size();

  auto f = forces(x, topo, interactions);
  for (std::size_t i = 0; i < n; ++i) v[i] += f[i] * half;  // B
  for (std::size_t i = 0; i < n; ++i) x[i] += v[i] * half;  // A

  if (ip.friction > 0.0 || ip.kT > 0.0) {  // O
    const double c1 = std::exp(-ip.friction * dt);
    const double c2 = std::sqrt(std::max(0.0, 1.0 - c1 * c1)) * std::sqrt(ip.kT);
    for (std::size_t i = 0; i < n; ++i) {
      Vec3 noise{};
      if (c2 > 0.0) {
        noise = {keyed_normal(ip.rng_seed, state.step, i, 0), keyed_normal(ip.rng_seed, state.step, i, 1),
                 keyed_normal(ip.rng_seed, state.step, i, 2)};
      }
      v[i] = v[i] * c1 + noise * c2;
    }
  }

  for (std::size_t i = 0; i < n; ++i) x[i] += v[i] * half;  // A
  f = forces(x, topo, interactions);
  for (std::size_t i = 0; i < n; ++i) v[i] += f[i] * half;  // B

  for (std::size_t i = 0; i < n; ++i) {
    if (!x[i].finite() || !v[i].finite()) throw IntegrationBlowup(i);
  }
  next.time = state.time + dt;
  next.step = state.step + 1;
  return next;
}

std::optional<std::size_t> pick_bead(const SimState& state, const Vec3& point, double grab_radius) {
  if (!(grab_radius > 0.0)) throw DomainError("grab radius must be positive");
  // Distances within this tolerance count as ties; the lower index wins.
  constexpr double kTieTolerance = 1e-12;
  std::optional<std::size_t> best;
  double best_d = 0.0;
  for (std::size_t i = 0; i < state.positions.size(); ++i) {
    const double d = (state.positions[i] * state.scale - point).norm();
    if (d > grab_radius) continue;
    if (!best || d < best_d - kTieTolerance) {
      best = i;
      best_d = d;
    }
  }
  return best;
}

SimState set_scale(const SimState& state, double s) {
  if (!(s > 0.0) || !std::isfinite(s)) throw DomainError("scale must be positive and finite");
  SimState next = state;
  next.scale = s;
  return next;
}

}  // namespace presence
