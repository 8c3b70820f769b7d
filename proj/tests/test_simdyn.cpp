// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstring>
#include <random>

#include "oracles.hpp"
#include "presence/errors.hpp"
#include "presence/simdyn.hpp"

using namespace presence;

namespace {

std::vector<Vec3> jiggled(const RingTopology& topo, double amp, std::uint64_t seed) {
  auto x = build_ring(topo).positions;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, amp);
  for (auto& p : x) p += Vec3{g(rng), g(rng), g(rng)};
  return x;
}

bool bitwise_equal(const SimState& a, const SimState& b) {
  if (a.size() != b.size()) return false;
  return std::memcmp(a.positions.data(), b.positions.data(), a.size() * sizeof(Vec3)) == 0 &&
         std::memcmp(a.velocities.data(), b.velocities.data(), a.size() * sizeof(Vec3)) == 0;
}

}  // namespace

TEST_CASE("ring construction") {
  const auto topo = RingTopology::regular(40);
  const auto s = build_ring(topo);
  REQUIRE(s.size() == 40);
  CHECK(s.scale == 1.0);
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK((s.positions[(i + 1) % 40] - s.positions[i]).norm() == doctest::Approx(0.15).epsilon(1e-9));
    CHECK(s.positions[i].y == 1.0);
    CHECK(s.velocities[i] == Vec3{});
  }
  // equal-arc placement is within 2% of r0 before relaxation
  const auto raw = ring_layout(topo, 0.0);
  const double chord = (raw.positions[1] - raw.positions[0]).norm();
  CHECK(std::abs(chord - 0.15) / 0.15 < 0.02);

  CHECK_THROWS_AS(build_ring(RingTopology::regular(2)), DomainError);
}

TEST_CASE("equilibrium ring has zero net force") {
  const auto topo = RingTopology::regular(40);
  const auto s = build_ring(topo);
  for (const auto& f : forces(s.positions, topo, {})) CHECK(f.norm() < 1e-10);
}

TEST_CASE("forces match the negative potential gradient") {
  auto topo = RingTopology::regular(40);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto x = jiggled(topo, 0.03, seed);
    const std::vector<InteractionForce> inter{
        {1, 3, x[3] + Vec3{0.05, 0.02, 0.0}, 100.0, 25.0},   // below the clamp
        {2, 20, x[20] + Vec3{0.0, 0.6, 0.3}, 100.0, 25.0},   // clamped
    };
    const auto f = forces(x, topo, inter);
    const auto fd = oracle::fd_forces(x, topo, inter);
    CHECK(oracle::relative_error(f, fd) < 1e-4);
  }
}

TEST_CASE("single stretched bond") {
  RingTopology topo = RingTopology::regular(3);
  topo.angle_stiffness = 0.0;
  std::vector<Vec3> x{{0, 0, 0}, {0.2, 0, 0}, {0.1, 0, 0.15 * std::sqrt(3.0) / 2 + 0.0}};
  // only bond 0-1 is off rest length in a configuration we check directly
  const auto fd = oracle::fd_forces(x, topo, {});
  const auto f = forces(x, topo, {});
  CHECK(oracle::relative_error(f, fd) < 1e-5);
  RingTopology single = topo;
  std::vector<Vec3> pair{{0, 0, 0}, {0.2, 0, 0}, {0.1, 10.0, 0}};
  single.bond_stiffness = 500.0;
  const auto fp = forces(pair, single, {});
  // beads 0 and 1: bond forces along x are equal and opposite
  const Vec3 b01 = Vec3{1, 0, 0} * (500.0 * (0.2 - 0.15));
  const auto f2 = oracle::fd_forces(pair, single, {});
  CHECK(oracle::relative_error(fp, f2) < 1e-5);
  CHECK(std::abs((fp[0] + fp[1] + fp[2]).norm()) < 1e-9);
  CHECK(b01.x > 0.0);
}

TEST_CASE("internal forces cancel and are translation invariant") {
  const auto topo = RingTopology::regular(40);
  const auto x = jiggled(topo, 0.05, 9);
  const auto f = forces(x, topo, {});
  Vec3 sum;
  for (const auto& v : f) sum += v;
  CHECK(sum.norm() < 1e-9 * 40);

  std::vector<Vec3> moved = x;
  const Vec3 shift{3.0, -2.0, 0.5};
  for (auto& p : moved) p += shift;
  const std::vector<InteractionForce> a{{1, 5, x[5] + Vec3{0.1, 0, 0}, 100, 25}};
  const std::vector<InteractionForce> b{{1, 5, x[5] + Vec3{0.1, 0, 0} + shift, 100, 25}};
  const auto fa = forces(x, topo, a);
  const auto fb = forces(moved, topo, b);
  for (std::size_t i = 0; i < fa.size(); ++i) CHECK((fa[i] - fb[i]).norm() < 1e-9);
}

TEST_CASE("interaction springs") {
  const auto topo = RingTopology::regular(40);
  const auto s = build_ring(topo);
  const std::vector<InteractionForce> at_bead{{1, 7, s.positions[7], 100, 25}};
  const auto f = forces(s.positions, topo, at_bead);
  for (const auto& v : f) CHECK(v.norm() < 1e-10);

  const std::vector<InteractionForce> far{{1, 7, s.positions[7] + Vec3{0, 10, 0}, 100, 25}};
  const auto g = forces(s.positions, topo, far);
  CHECK(g[7].norm() == doctest::Approx(25.0).epsilon(1e-12));
}

TEST_CASE("fixed point without thermostat") {
  const auto topo = RingTopology::regular(40);
  const auto s = build_ring(topo);
  IntegratorParams ip;
  ip.friction = 0.0;
  ip.kT = 0.0;
  const auto next = step(s, topo, {}, ip);
  CHECK(next.time == doctest::Approx(ip.dt));
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK((next.positions[i] - s.positions[i]).norm() < 1e-12);
    CHECK(next.velocities[i].norm() < 1e-10);
  }
}

TEST_CASE("energy drift with the thermostat off") {
  const auto topo = RingTopology::regular(40);
  const auto r = oracle::energy_drift(topo, 10000, 0.1);
  MESSAGE("dt=" << r.dt << " modified-energy drift=" << r.drift << " raw excursion=" << r.raw_excursion);
  CHECK(r.dt > 0.0);
  CHECK(r.drift < 1e-4);
  CHECK(r.raw_excursion < 2e-2);
}

TEST_CASE("thermostatted trajectory is bitwise reproducible") {
  const auto topo = RingTopology::regular(40);
  IntegratorParams ip;
  ip.rng_seed = 42;
  const std::vector<InteractionForce> inter{{1, 2, Vec3{0.5, 1.3, 0.2}, 100, 25}};
  SimState a = build_ring(topo);
  SimState b = build_ring(topo);
  for (int i = 0; i < 500; ++i) {
    a = step(a, topo, inter, ip);
    b = step(b, topo, inter, ip);
  }
  CHECK(bitwise_equal(a, b));
  ip.rng_seed = 43;
  SimState c = build_ring(topo);
  for (int i = 0; i < 500; ++i) c = step(c, topo, inter, ip);
  CHECK_FALSE(bitwise_equal(a, c));
}

TEST_CASE("keyed noise depends only on its key") {
  CHECK(keyed_normal(1, 2, 3, 0) == keyed_normal(1, 2, 3, 0));
  CHECK(keyed_normal(1, 2, 3, 0) != keyed_normal(1, 2, 3, 1));
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double z = keyed_normal(9, static_cast<std::uint64_t>(i), 0, 0);
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.05);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("blowup is reported with the offending bead") {
  const auto topo = RingTopology::regular(10);
  auto s = build_ring(topo);
  IntegratorParams ip;
  s.velocities[0] = {std::numeric_limits<double>::infinity(), 0, 0};
  try {
    (void)step(s, topo, {}, ip);
    FAIL("expected blowup");
  } catch (const IntegrationBlowup& e) {
    CHECK(e.bead() == 0);
  }
  // a bad bead poisons its angle neighbours; the lowest index is named
  s = build_ring(topo);
  s.velocities[4] = {std::numeric_limits<double>::infinity(), 0, 0};
  try {
    (void)step(s, topo, {}, ip);
    FAIL("expected blowup");
  } catch (const IntegrationBlowup& e) {
    CHECK(e.bead() >= 2);
    CHECK(e.bead() <= 4);
  }
}

TEST_CASE("pick_bead") {
  const auto topo = RingTopology::regular(40);
  const auto s = build_ring(topo);
  CHECK(pick_bead(s, s.positions[7], 0.25) == std::optional<std::size_t>(7));
  CHECK_FALSE(pick_bead(s, Vec3{0, 5, 0}, 0.25).has_value());
  const Vec3 mid = (s.positions[3] + s.positions[4]) * 0.5;
  CHECK(pick_bead(s, mid, 0.25) == std::optional<std::size_t>(3));
}

TEST_CASE("set_scale") {
  const auto topo = RingTopology::regular(40);
  const auto s = build_ring(topo);
  const auto same = set_scale(s, 1.0);
  CHECK(same.positions == s.positions);
  const auto big = set_scale(s, 2.0);
  CHECK(big.positions == s.positions);
  CHECK(big.scale == 2.0);
  const Vec3 p = s.positions[12] + Vec3{0.01, 0.0, 0.0};
  CHECK(pick_bead(big, p * 2.0, 0.25) == pick_bead(s, p, 0.25));
  CHECK_THROWS_AS(set_scale(s, 0.0), DomainError);
}
