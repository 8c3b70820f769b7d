// SPDX-License-Identifier: Apache-2.0
//
// Independent reference computations shared by the unit and acceptance
// tests. Nothing here calls the code path it is used to check.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "presence/simdyn.hpp"

namespace oracle {

using presence::Vec3;

/// -grad V by central differences.
inline std::vector<Vec3> fd_forces(std::vector<Vec3> x, const presence::RingTopology& topo,
                                   std::span<const presence::InteractionForce> inter, double h = 1e-6) {
  std::vector<Vec3> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      double* coord = c == 0 ? &x[i].x : c == 1 ? &x[i].y : &x[i].z;
      const double saved = *coord;
      *coord = saved + h;
      const double up = presence::potential_energy(x, topo, inter);
      *coord = saved - h;
      const double down = presence::potential_energy(x, topo, inter);
      *coord = saved;
      const double d = -(up - down) / (2.0 * h);
      (c == 0 ? g[i].x : c == 1 ? g[i].y : g[i].z) = d;
    }
  }
  return g;
}

/// max_i |a_i - b_i| / max_i |b_i| over all components.
inline double relative_error(std::span<const Vec3> a, std::span<const Vec3> b) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Vec3 d = a[i] - b[i];
    num = std::max({num, std::abs(d.x), std::abs(d.y), std::abs(d.z)});
    den = std::max({den, std::abs(b[i].x), std::abs(b[i].y), std::abs(b[i].z)});
  }
  return den == 0.0 ? num : num / den;
}

/// Largest Hessian eigenvalue at `x` by power iteration on finite-difference
/// Hessian-vector products (unit masses, so this is omega_max^2).
inline double max_hessian_eigenvalue(const std::vector<Vec3>& x, const presence::RingTopology& topo,
                                     int iterations = 300) {
  const std::size_t n = x.size();
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  std::vector<Vec3> v(n);
  for (auto& e : v) e = {g(rng), g(rng), g(rng)};
  auto normalize = [](std::vector<Vec3>& w) {
    double s = 0.0;
    for (const auto& e : w) s += e.squared_norm();
    s = std::sqrt(s);
    for (auto& e : w) e = e / s;
    return s;
  };
  normalize(v);
  const double eps = 1e-6;
  double lambda = 0.0;
  for (int it = 0; it < iterations; ++it) {
    std::vector<Vec3> xp(n), xm(n);
    for (std::size_t i = 0; i < n; ++i) {
      xp[i] = x[i] + v[i] * eps;
      xm[i] = x[i] - v[i] * eps;
    }
    const auto fp = presence::forces(xp, topo, {});
    const auto fm = presence::forces(xm, topo, {});
    std::vector<Vec3> hv(n);
    for (std::size_t i = 0; i < n; ++i) hv[i] = (fm[i] - fp[i]) / (2.0 * eps);
    lambda = normalize(hv);
    v = hv;
  }
  return lambda;
}

struct DriftResult {
  double dt = 0.0;
  double drift = 0.0;          // max |H~ - H~0| / |H~0|, modified energy
  double raw_excursion = 0.0;  // max |E - E0| / |E0|, plain total energy
};

/// Second-order modified energy of velocity Verlet (unit masses):
/// H~ = H + dt^2 (p.V''.p / 12 - |grad V|^2 / 24). Symplectic Verlet conserves
/// H~ up to O(dt^4) while H itself oscillates at O((omega dt)^2), so H~ is
/// the quantity whose drift exposes integrator defects.
inline double modified_energy(const presence::SimState& s, const presence::RingTopology& topo, double dt) {
  const auto f = presence::forces(s.positions, topo, {});
  double grad2 = 0.0;
  for (const auto& v : f) grad2 += v.squared_norm();
  const double eps = 1e-6;
  std::vector<Vec3> xp = s.positions, xm = s.positions;
  for (std::size_t i = 0; i < xp.size(); ++i) {
    xp[i] += s.velocities[i] * eps;
    xm[i] -= s.velocities[i] * eps;
  }
  const auto fp = presence::forces(xp, topo, {});
  const auto fm = presence::forces(xm, topo, {});
  double php = 0.0;
  for (std::size_t i = 0; i < xp.size(); ++i) php += s.velocities[i].dot((fm[i] - fp[i]) / (2.0 * eps));
  const double h = presence::potential_energy(s.positions, topo, {}) + presence::kinetic_energy(s.velocities);
  return h + dt * dt * (php / 12.0 - grad2 / 24.0);
}

/// Thermostat-off run from a ring whose beads are displaced by ~1 mm, with
/// dt = (2 / omega_max) * dt_fraction and omega_max from power iteration.
inline DriftResult energy_drift(const presence::RingTopology& topo, int steps, double dt_fraction,
                                std::uint64_t seed = 5) {
  presence::SimState s = presence::build_ring(topo);
  const double lambda = max_hessian_eigenvalue(s.positions, topo);
  DriftResult r;
  r.dt = 2.0 / std::sqrt(lambda) * dt_fraction;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.001);
  for (auto& p : s.positions) p += Vec3{g(rng), g(rng), g(rng)};
  presence::IntegratorParams ip;
  ip.dt = r.dt;
  ip.friction = 0.0;
  ip.kT = 0.0;
  auto energy = [&](const presence::SimState& st) {
    return presence::potential_energy(st.positions, topo, {}) + presence::kinetic_energy(st.velocities);
  };
  const double e0 = energy(s);
  const double m0 = modified_energy(s, topo, r.dt);
  for (int i = 0; i < steps; ++i) {
    s = presence::step(s, topo, {}, ip);
    r.raw_excursion = std::max(r.raw_excursion, std::abs(energy(s) - e0) / std::abs(e0));
    r.drift = std::max(r.drift, std::abs(modified_energy(s, topo, r.dt) - m0) / std::abs(m0));
  }
  return r;
}

/// Two-sided p for a Student t statistic from Boost.Math.
inline double boost_t_two_sided(double t, double df) {
  boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

/// Exact two-sided signed-rank p by enumerating all 2^n sign patterns of
/// the given (possibly tied) ranks. P(min(W+, W-) <= observed).
inline double wilcoxon_bruteforce(const std::vector<double>& ranks, double w_plus) {
  const std::size_t n = ranks.size();
  double total = 0.0;
  for (double r : ranks) total += r;
  const double observed = std::min(w_plus, total - w_plus);
  const std::uint64_t patterns = 1ull << n;
  std::uint64_t hits = 0;
  for (std::uint64_t m = 0; m < patterns; ++m) {
    double wp = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (m >> i & 1u) wp += ranks[i];
    }
    if (std::min(wp, total - wp) <= observed + 1e-9) ++hits;
  }
  return std::min(1.0, static_cast<double>(hits) / static_cast<double>(patterns));
}

}  // namespace oracle
