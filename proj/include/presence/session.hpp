// SPDX-License-Identifier: Apache-2.0
//
// Authoritative session state. Everything here is single-threaded and
// deterministic: the same sequence of joins, inputs and ticks always yields
// the same frames. The network server owns one Session and serializes all
// calls into it.
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "presence/protocol.hpp"
#include "presence/simdyn.hpp"
#include "presence/spatial.hpp"
#include "presence/states.hpp"

namespace presence {

struct SessionConfig {
  int max_participants = 5;
  double tick_rate = 30.0;
  /// Multiplies the state-machine clock per tick (1 = real time).
  double time_scale = 1.0;
  double grab_radius = 0.25;
  /// Keep the state machine held until a facilitator resumes it.
  bool start_held = false;
  double interaction_stiffness = 100.0;
  double interaction_max_force = 25.0;
  PlaySpace play_space;
  BodyKernel kernel;
  RingTopology topology;
  IntegratorParams integrator;
  std::vector<StateSequence> sequences;
  /// Registry extension document, or null for the canonical registry.
  nlohmann::json registry_extension;

  void validate() const;
  double tick_interval() const { return 1.0 / tick_rate; }
};

nlohmann::json to_json(const SessionConfig& c);
/// Missing fields take defaults; unknown fields are schema errors.
SessionConfig session_config_from_json(const nlohmann::json& j);

/// One timestamped record of the session log. `t` is session time.
struct SessionEvent {
  std::uint64_t id = 0;
  double t = 0.0;
  std::uint64_t tick = 0;
  std::string type;
  nlohmann::json detail = nlohmann::json::object();

  nlohmann::json to_json() const;
  static SessionEvent from_json(const nlohmann::json& j);
};

class EventSink {
 public:
  virtual ~EventSink() = default;
  virtual void write(const SessionEvent& e) = 0;
};

/// Keeps every event in memory.
class EventRecorder : public EventSink {
 public:
  void write(const SessionEvent& e) override { events.push_back(e); }
  std::vector<SessionEvent> events;
};

struct AvatarPose {
  Pose head;
  Pose left;
  Pose right;
};

struct HandState {
  Mudra mudra = Mudra::none;
  bool pinch_started = false;
  std::optional<std::size_t> grabbed_bead;
  Vec3 shared_position;
};

struct RosterEntry {
  ParticipantId id = 0;
  Role role = Role::participant;
  std::string label;
  std::optional<int> node_index;
  RigidTransform node_transform;
  std::optional<AvatarPose> shared_pose;
  std::int64_t last_seq = -1;
  bool spectating = false;
  std::array<HandState, 2> hands;  // left, right

  bool visible() const { return role != Role::observer && !spectating && shared_pose.has_value(); }
};

using JoinOutcome = std::variant<JoinAccept, JoinReject>;

/// Identity used for commands arriving through the control endpoint.
inline constexpr ParticipantId kConsoleSender = 0;

class Session {
 public:
  explicit Session(SessionConfig config);

  /// Non-owning; the sink must outlive the session or be removed.
  void add_sink(EventSink* sink);
  void remove_sink(EventSink* sink);

  JoinOutcome handle_join(const JoinRequest& req);
  void leave(ParticipantId id);
  /// Applies one client message. Returns a reply for the sender, if any.
  std::optional<Message> ingest(ParticipantId sender, const Message& m);
  /// Facilitator command from the control endpoint.
  std::optional<ErrorMessage> console_command(const FacilitatorCommand& c);
  WorldFrame tick();

  const SessionConfig& config() const { return config_; }
  const SimState& sim() const { return sim_; }
  const StateMachine& machine() const { return machine_; }
  const std::map<ParticipantId, RosterEntry>& roster() const { return roster_; }
  const RosterEntry* find(ParticipantId id) const;
  std::uint64_t tick_count() const { return tick_; }
  double time() const { return static_cast<double>(tick_) * config_.tick_interval(); }
  int participant_count() const;
  std::optional<ParticipantId> facilitator() const;
  const std::optional<WorldFrame>& last_frame() const { return last_frame_; }

  /// Roster, state and luminosity summary served to the console.
  nlohmann::json summary() const;
  /// State handed to late joiners.
  nlohmann::json snapshot() const;

 private:
  void emit(std::string type, nlohmann::json detail);
  std::optional<Message> apply_command(ParticipantId sender, const FacilitatorCommand& c);
  void ingest_pose(RosterEntry& entry, const PoseUpdate& p);
  void emit_machine_events(const std::vector<MachineEvent>& events);
  std::vector<InteractionForce> bind_interactions();

  SessionConfig config_;
  std::shared_ptr<const ParamRegistry> registry_;
  SimState sim_;
  StateMachine machine_;
  std::map<ParticipantId, RosterEntry> roster_;
  ParticipantId next_id_ = 1;
  std::uint64_t tick_ = 0;
  std::uint64_t next_event_id_ = 1;
  std::optional<WorldFrame> last_frame_;
  std::vector<EventSink*> sinks_;
};

/// 64-bit FNV-1a of the frame's canonical payload, as 16 hex digits.
std::string frame_digest(const WorldFrame& f);

}  // namespace presence
