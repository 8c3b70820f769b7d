// SPDX-License-Identifier: Apache-2.0
//
// Headless scripted participants. Scripts are JSON documents in the same
// style as state sequences:
//
//   {"version": 1, "name": "bow", "start": [0, 1.6, 1.0],
//    "actions": [{"action": "move_to", "target": [0, 1.6, 0.5], "over": 4},
//                {"action": "set_mudra", "hand": "right", "state": "index"},
//                {"action": "bow", "seconds": 3},
//                {"action": "raise_arms", "seconds": 4},
//                {"action": "idle", "seconds": 2},
//                {"action": "mimic", "seconds": 5},
//                {"action": "reach", "hand": "right", "target": "nearest_bead", "over": 1}]}
//
// Positions are node-local; the server composes them into the shared frame.
#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "presence/netdiag.hpp"
#include "presence/protocol.hpp"

namespace presence {

inline constexpr double kBotHeadHeight = 1.6;
inline constexpr double kBotHandOffsetX = 0.2;
inline constexpr double kBotHandDropY = 0.6;

enum class Hand { left, right };

struct MoveTo {
  Vec3 target;
  double over = 0.0;
};
struct SetMudra {
  Hand hand = Hand::right;
  Mudra state = Mudra::none;
};
struct Bow {
  double seconds = 0.0;
};
struct RaiseArms {
  double seconds = 0.0;
};
struct Idle {
  double seconds = 0.0;
};
/// Copies another avatar's gesture: its head height and hand offsets in its
/// own head frame, applied around this bot's head position.
struct Mimic {
  double seconds = 0.0;
};
/// Moves one hand to a fixed local point or, when target is empty, to the
/// bead nearest that hand in the latest frame. The hand stays there.
struct Reach {
  Hand hand = Hand::right;
  std::optional<Vec3> target;
  double over = 0.0;
};

using BotAction = std::variant<MoveTo, SetMudra, Bow, RaiseArms, Idle, Mimic, Reach>;

struct BotScript {
  std::string name;
  Vec3 start{0.0, kBotHeadHeight, 1.0};
  std::vector<BotAction> actions;

  double duration() const;
};

/// Throws SchemaError naming the offending field.
BotScript bot_script_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BotScript& s);
BotScript load_bot_script(const std::string& path);

/// What the world looks like to the script at one instant.
struct BotWorldView {
  std::optional<WorldFrame> frame;
  ParticipantId self = 0;
  int node_index = 0;
  int n_participants = 1;
};

struct BotPoseSample {
  Pose head;
  Pose left;
  Pose right;
  Mudra mudra_left = Mudra::none;
  Mudra mudra_right = Mudra::none;
};

/// Stateful evaluator of a script timeline. Calls must use non-decreasing t.
class BotPlayer {
 public:
  explicit BotPlayer(BotScript script);
  BotPoseSample sample(double t, const BotWorldView& world);
  bool done(double t) const { return t >= script_.duration(); }
  const BotScript& script() const { return script_; }

 private:
  void enter(std::size_t i);
  void finish(std::size_t i, const BotWorldView& world);
  Vec3 rest_hand(int h, const Vec3& head) const;
  Vec3 reach_target(const Reach& r, const BotWorldView& world);

  BotScript script_;
  std::vector<double> starts_;
  std::size_t cursor_ = 0;
  std::size_t entered_ = static_cast<std::size_t>(-1);
  Vec3 head_;
  Vec3 from_head_;
  std::array<Mudra, 2> mudra_{Mudra::none, Mudra::none};
  std::array<std::optional<Vec3>, 2> anchor_;  // hand pinned after a reach
  std::array<Vec3, 2> reach_from_;
  std::optional<std::size_t> reach_bead_;
  Vec3 last_reach_target_;
};

struct BotOptions {
  std::string name = "bot";
  Role role = Role::participant;
  std::optional<FaultProfile> faults;  // applied to outgoing traffic after joining
  /// Keep holding the last pose after the script until the sequence finishes.
  bool until_finished = false;
  /// Upper bound on the whole run, as a safety net.
  std::chrono::milliseconds max_duration{std::chrono::minutes(5)};
  std::chrono::milliseconds connect_timeout{std::chrono::seconds(5)};
  /// Optional facilitator commands sent once joined (spectate, resume...).
  std::vector<FacilitatorCommand> commands_after_join;
  /// Polled every loop; each command returned is sent.
  std::function<std::optional<FacilitatorCommand>()> command_source;
  /// Called once the join is answered (true when accepted).
  std::function<void(bool)> on_join;
  /// After the script, keep holding the last pose while this returns true.
  std::function<bool()> hold_while;
};

struct LuminositySample {
  std::uint64_t tick = 0;
  double value = 0.0;
};

struct BotReport {
  std::string name;
  std::optional<ParticipantId> id;
  int node_index = -1;
  std::uint64_t frames_received = 0;
  std::vector<std::string> states_observed;
  std::vector<LuminositySample> luminosity_trace;
  /// Longest observed gap between sending a pose and first seeing it in a
  /// frame, in milliseconds. Absent when no own pose was ever seen.
  std::optional<double> max_pose_staleness_ms;
  std::vector<std::string> errors;
  bool partial = false;  // connection lost before the script completed
  bool rejected = false;
  bool saw_finished = false;
  std::optional<WorldFrame> finished_frame;  // first frame after the sequence ended
  std::optional<WorldFrame> last_frame;
  /// Ticks at which this bot's own avatar appeared in a frame.
  std::uint64_t frames_with_self = 0;
  std::uint64_t poses_sent = 0;

  nlohmann::json to_json() const;
};

/// Connects, joins, plays the script and leaves. Connection failures before
/// joining throw ConnectivityError; everything later lands in the report.
BotReport run_bot(const std::string& host, std::uint16_t port, const BotScript& script, const BotOptions& opt = {});

class EnsembleError : public std::runtime_error {
 public:
  EnsembleError(const std::string& what, std::vector<BotReport> reports)
      : std::runtime_error(what), reports_(std::move(reports)) {}
  const std::vector<BotReport>& reports() const { return reports_; }

 private:
  std::vector<BotReport> reports_;
};

struct EnsembleOptions {
  std::size_t bots = 4;
  std::optional<FaultProfile> faults;  // bot i uses seed + i
  bool until_finished = false;
  /// Add a spectating facilitator that resumes the sequence once every bot
  /// has joined or been rejected.
  bool facilitator = false;
  std::chrono::milliseconds max_duration{std::chrono::minutes(5)};
};

struct EnsembleResult {
  std::vector<BotReport> bots;
  std::optional<BotReport> facilitator;
};

/// Runs bots concurrently against one server; scripts are assigned round
/// robin. A rejected join is reported, not thrown. Throws EnsembleError
/// when any bot cannot connect or crashes.
EnsembleResult run_ensemble(const std::string& host, std::uint16_t port, const std::vector<BotScript>& scripts,
                            const EnsembleOptions& opt = {});

}  // namespace presence
