// SPDX-License-Identifier: Apache-2.0
//
// Random on-lattice protocol messages for property tests.
#pragma once

#include <random>
#include <string>

#include "presence/protocol.hpp"

namespace gen {

using namespace presence;

class MessageGen {
 public:
  explicit MessageGen(std::uint64_t seed) : rng_(seed) {}

  double position() { return static_cast<double>(int_in(-200000, 200000)) / 1e4; }
  double unit6() { return static_cast<double>(int_in(-1000000, 1000000)) / 1e6; }
  double positive6() { return static_cast<double>(int_in(1, 50000000)) / 1e6; }

  Pose pose() { return {{position(), position(), position()}, {unit6(), unit6(), unit6(), unit6()}}; }

  std::string text() {
    static const char alphabet[] = "abcdefghijklmnopqrstuvwxyz_-. 0123456789\"\\/\xc3\xa9";
    std::string s;
    const int n = int_in(0, 12);
    for (int i = 0; i < n; ++i) s += alphabet[int_in(0, sizeof alphabet - 4)];
    if (coin()) s += "\xc3\xa9";  // keep UTF-8 well-formed
    return s;
  }

  Mudra mudra() { return static_cast<Mudra>(int_in(0, 2)); }

  Message message() {
    switch (int_in(0, 9)) {
      case 0:
        return JoinRequest{int_in(0, 3), static_cast<Role>(int_in(0, 2)), text()};
      case 1: {
        JoinAccept a;
        a.participant_id = static_cast<ParticipantId>(int_in(1, 1000000));
        a.node_index = int_in(-1, 4);
        a.n_participants = int_in(1, 5);
        a.session_config = {{"tick_rate", int_in(1, 90)}, {"label", text()}};
        a.snapshot = {{"tick", int_in(0, 100000)}};
        return a;
      }
      case 2:
        return JoinReject{text()};
      case 3: {
        PoseUpdate p;
        p.seq = int_in(0, 1 << 30);
        p.head = pose();
        p.left = pose();
        p.right = pose();
        p.mudra_left = mudra();
        p.mudra_right = mudra();
        return p;
      }
      case 4:
        return Ping{rng_()};
      case 5:
        return Pong{rng_()};
      case 6: {
        using K = FacilitatorCommand::Kind;
        FacilitatorCommand c;
        c.kind = static_cast<K>(int_in(0, 6));
        if (c.kind == K::set_override || c.kind == K::clear_override) c.key = text();
        if (c.kind == K::set_override) {
          if (coin()) {
            c.value = text();
          } else {
            c.value = unit6();
          }
        }
        if (c.kind == K::set_scale) c.scale = positive6();
        if (c.kind == K::spectate) c.spectate = coin();
        return c;
      }
      case 7: {
        WorldFrame f;
        f.tick = static_cast<std::uint64_t>(int_in(0, 1 << 30));
        f.state_name = text();
        const int n = int_in(0, 5);
        for (int i = 0; i < n; ++i) {
          f.avatars.push_back({static_cast<ParticipantId>(int_in(1, 99)), pose(), pose(), pose(), positive6()});
        }
        const int beads = int_in(0, 40);
        for (int i = 0; i < beads; ++i) f.sim_positions.push_back({position(), position(), position()});
        f.group_luminosity = positive6();
        f.scale = positive6();
        return f;
      }
      case 8:
        return Leave{};
      default:
        return ErrorMessage{text(), text()};
    }
  }

  std::mt19937_64& rng() { return rng_; }

 private:
  int int_in(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool coin() { return (rng_() & 1u) != 0; }

  std::mt19937_64 rng_;
};

}  // namespace gen
