// SPDX-License-Identifier: Apache-2.0
#include "presence/session.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "presence/errors.hpp"

namespace presence {

using nlohmann::json;

namespace {

std::shared_ptr<const ParamRegistry> make_registry(const json& extension) {
  if (extension.is_null()) return ParamRegistry::canonical_shared();
  return std::make_shared<const ParamRegistry>(ParamRegistry::extended(extension));
}

StateSequence script_of(const SessionConfig& c) {
  if (c.sequences.empty()) throw DomainError("session needs at least one state sequence");
  return concat_sequences(c.sequences);
}

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& path) {
  if (!j.is_object()) throw SchemaError(path, "must be an object");
  for (const auto& [k, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw SchemaError(path + "." + k, "unknown field");
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& path) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw SchemaError(path + "." + key, "wrong type");
  }
}

}  // namespace

void SessionConfig::validate() const {
  if (max_participants < 1 || max_participants > 5) throw DomainError("max_participants must be in 1..5");
  if (!(tick_rate > 0.0)) throw DomainError("tick_rate must be positive");
  if (!(time_scale > 0.0)) throw DomainError("time_scale must be positive");
  if (!(grab_radius > 0.0)) throw DomainError("grab_radius must be positive");
  if (!(interaction_stiffness >= 0.0)) throw DomainError("interaction stiffness must be non-negative");
  if (!(interaction_max_force > 0.0)) throw DomainError("interaction max force must be positive");
  play_space.validate();
  kernel.validate();
  topology.validate();
  integrator.validate();
  if (sequences.empty()) throw DomainError("session needs at least one state sequence");
}

json to_json(const SessionConfig& c) {
  json seqs = json::array();
  for (const auto& s : c.sequences) seqs.push_back(to_json(s));
  return {
      {"max_participants", c.max_participants},
      {"tick_rate", c.tick_rate},
      {"time_scale", c.time_scale},
      {"grab_radius", c.grab_radius},
      {"start_held", c.start_held},
      {"interaction", {{"stiffness", c.interaction_stiffness}, {"max_force", c.interaction_max_force}}},
      {"play_space", {{"width", c.play_space.width}, {"depth", c.play_space.depth}}},
      {"kernel",
       {{"sigma", c.kernel.sigma},
        {"base_luminosity", c.kernel.base_luminosity},
        {"pair_gain", c.kernel.pair_gain},
        {"center_offset_y", c.kernel.center_offset_y}}},
      {"topology",
       {{"n_beads", c.topology.n_beads},
        {"rest_length", c.topology.rest_length},
        {"bond_stiffness", c.topology.bond_stiffness},
        {"angle_stiffness", c.topology.angle_stiffness},
        {"rest_angle", c.topology.rest_angle}}},
      {"integrator",
       {{"dt", c.integrator.dt},
        {"friction", c.integrator.friction},
        {"kT", c.integrator.kT},
        {"rng_seed", c.integrator.rng_seed}}},
      {"sequences", std::move(seqs)},
      {"registry", c.registry_extension},
  };
}

SessionConfig session_config_from_json(const json& j) {
  reject_unknown(j,
                 {"max_participants", "tick_rate", "time_scale", "grab_radius", "start_held", "interaction", "play_space", "kernel",
                  "topology", "integrator", "sequences", "registry"},
                 "$");
  SessionConfig c;
  read(j, "max_participants", c.max_participants, "$");
  read(j, "tick_rate", c.tick_rate, "$");
  read(j, "time_scale", c.time_scale, "$");
  read(j, "grab_radius", c.grab_radius, "$");
  read(j, "start_held", c.start_held, "$");
  if (j.contains("interaction")) {
    const auto& i = j["interaction"];
    reject_unknown(i, {"stiffness", "max_force"}, "$.interaction");
    read(i, "stiffness", c.interaction_stiffness, "$.interaction");
    read(i, "max_force", c.interaction_max_force, "$.interaction");
  }
  if (j.contains("play_space")) {
    const auto& p = j["play_space"];
    reject_unknown(p, {"width", "depth"}, "$.play_space");
    read(p, "width", c.play_space.width, "$.play_space");
    read(p, "depth", c.play_space.depth, "$.play_space");
  }
  if (j.contains("kernel")) {
    const auto& k = j["kernel"];
    reject_unknown(k, {"sigma", "base_luminosity", "pair_gain", "center_offset_y"}, "$.kernel");
    read(k, "sigma", c.kernel.sigma, "$.kernel");
    read(k, "base_luminosity", c.kernel.base_luminosity, "$.kernel");
    read(k, "pair_gain", c.kernel.pair_gain, "$.kernel");
    read(k, "center_offset_y", c.kernel.center_offset_y, "$.kernel");
  }
  if (j.contains("topology")) {
    const auto& t = j["topology"];
    reject_unknown(t, {"n_beads", "rest_length", "bond_stiffness", "angle_stiffness", "rest_angle"}, "$.topology");
    int n = c.topology.n_beads;
    double r0 = c.topology.rest_length;
    read(t, "n_beads", n, "$.topology");
    read(t, "rest_length", r0, "$.topology");
    if (n < 3) throw SchemaError("$.topology.n_beads", "ring requires at least 3 beads");
    c.topology = RingTopology::regular(n, r0);
    read(t, "bond_stiffness", c.topology.bond_stiffness, "$.topology");
    read(t, "angle_stiffness", c.topology.angle_stiffness, "$.topology");
    read(t, "rest_angle", c.topology.rest_angle, "$.topology");
  }
  if (j.contains("integrator")) {
    const auto& i = j["integrator"];
    reject_unknown(i, {"dt", "friction", "kT", "rng_seed"}, "$.integrator");
    read(i, "dt", c.integrator.dt, "$.integrator");
    read(i, "friction", c.integrator.friction, "$.integrator");
    read(i, "kT", c.integrator.kT, "$.integrator");
    read(i, "rng_seed", c.integrator.rng_seed, "$.integrator");
  }
  if (j.contains("registry")) c.registry_extension = j["registry"];
  const auto registry = make_registry(c.registry_extension);
  if (j.contains("sequences")) {
    if (!j["sequences"].is_array()) throw SchemaError("$.sequences", "must be an array");
    for (std::size_t i = 0; i < j["sequences"].size(); ++i) {
      try {
        c.sequences.push_back(sequence_from_json(j["sequences"][i], *registry));
      } catch (const SchemaError& e) {
        throw SchemaError("$.sequences[" + std::to_string(i) + "]" + e.path().substr(1), e.what());
      }
    }
  }
  return c;
}

json SessionEvent::to_json() const {
  json j = detail.is_object() ? detail : json::object();
  j["id"] = id;
  j["t"] = t;
  j["tick"] = tick;
  j["type"] = type;
  return j;
}

SessionEvent SessionEvent::from_json(const json& j) {
  if (!j.is_object() || !j.contains("type")) throw SchemaError("$", "event needs a type");
  SessionEvent e;
  e.id = j.value("id", std::uint64_t{0});
  e.t = j.value("t", 0.0);
  e.tick = j.value("tick", std::uint64_t{0});
  e.type = j["type"].get<std::string>();
  e.detail = j;
  for (const char* k : {"id", "t", "tick", "type"}) e.detail.erase(k);
  return e;
}

Session::Session(SessionConfig config)
    : config_(std::move(config)),
      registry_(make_registry(config_.registry_extension)),
      sim_((config_.validate(), build_ring(config_.topology))),
      machine_(script_of(config_), registry_) {
  if (config_.start_held) machine_.apply(MachineCommand::hold());
}

void Session::add_sink(EventSink* sink) {
  if (sink && std::find(sinks_.begin(), sinks_.end(), sink) == sinks_.end()) {
    sinks_.push_back(sink);
    sink->write(SessionEvent{0, time(), tick_, "session-start", {{"config", to_json(config_)}}});
  }
}

void Session::remove_sink(EventSink* sink) { std::erase(sinks_, sink); }

void Session::emit(std::string type, json detail) {
  SessionEvent e{next_event_id_++, time(), tick_, std::move(type), std::move(detail)};
  for (auto* s : sinks_) s->write(e);
}

const RosterEntry* Session::find(ParticipantId id) const {
  auto it = roster_.find(id);
  return it == roster_.end() ? nullptr : &it->second;
}

int Session::participant_count() const {
  return static_cast<int>(std::count_if(roster_.begin(), roster_.end(),
                                        [](const auto& kv) { return kv.second.role == Role::participant; }));
}

std::optional<ParticipantId> Session::facilitator() const {
  for (const auto& [id, e] : roster_) {
    if (e.role == Role::facilitator) return id;
  }
  return std::nullopt;
}

JoinOutcome Session::handle_join(const JoinRequest& req) {
  auto reject = [&](std::string reason) -> JoinOutcome {
    emit("join-rejected", {{"role", std::string(to_string(req.role))},
                           {"node_label", req.node_label},
                           {"version", req.version},
                           {"reason", reason}});
    return JoinReject{std::move(reason)};
  };
  if (req.version != kProtocolVersion) {
    return reject("protocol version mismatch: expected " + std::to_string(kProtocolVersion) + ", got " +
                  std::to_string(req.version));
  }

  RosterEntry entry;
  entry.role = req.role;
  entry.label = req.node_label;
  if (req.role == Role::participant) {
    if (participant_count() >= config_.max_participants) return reject("session full");
    std::set<int> used;
    for (const auto& [_, e] : roster_) {
      if (e.node_index) used.insert(*e.node_index);
    }
    int slot = 0;
    while (used.count(slot)) ++slot;
    entry.node_index = slot;
    entry.node_transform = radial_transform(slot, config_.max_participants);
  } else if (req.role == Role::facilitator) {
    if (facilitator()) return reject("facilitator already present");
  } else {
    entry.spectating = true;
  }

  entry.id = next_id_++;
  const ParticipantId id = entry.id;
  const int node_index = entry.node_index.value_or(-1);
  roster_.emplace(id, std::move(entry));
  emit("joined", {{"participant_id", id},
                  {"role", std::string(to_string(req.role))},
                  {"node_label", req.node_label},
                  {"node_index", node_index}});
  return JoinAccept{id, to_json(config_), node_index, config_.max_participants, snapshot()};
}

void Session::leave(ParticipantId id) {
  if (roster_.erase(id) > 0) emit("left", {{"participant_id", id}});
}

void Session::ingest_pose(RosterEntry& entry, const PoseUpdate& p) {
  const RigidTransform& t = entry.node_transform;
  auto shared = [&](const Pose& local) {
    Pose q = local;
    q.orientation = q.orientation.norm() > 0.0 ? q.orientation.normalized() : Quat{};
    return to_shared(q, t);
  };
  entry.last_seq = p.seq;
  entry.shared_pose = AvatarPose{shared(p.head), shared(p.left), shared(p.right)};
  const std::array<Mudra, 2> mudras{p.mudra_left, p.mudra_right};
  const std::array<Vec3, 2> hand_pos{entry.shared_pose->left.position, entry.shared_pose->right.position};
  for (std::size_t h = 0; h < 2; ++h) {
    HandState& hand = entry.hands[h];
    if (mudras[h] == Mudra::none) {
      hand.pinch_started = false;
      hand.grabbed_bead.reset();
    } else if (hand.mudra == Mudra::none) {
      hand.pinch_started = true;
    }
    hand.mudra = mudras[h];
    hand.shared_position = hand_pos[h];
  }
}

std::optional<Message> Session::ingest(ParticipantId sender, const Message& m) {
  auto it = roster_.find(sender);
  if (it == roster_.end()) return ErrorMessage{"not-joined", "sender has not joined"};
  RosterEntry& entry = it->second;

  if (const auto* ping = std::get_if<Ping>(&m)) return Pong{ping->nonce};
  if (const auto* pose = std::get_if<PoseUpdate>(&m)) {
    if (accept_pose(entry.last_seq, *pose) == PoseVerdict::drop) return std::nullopt;
    for (const Pose* p : {&pose->head, &pose->left, &pose->right}) {
      if (!p->position.finite() || !std::isfinite(p->orientation.norm())) {
        return ErrorMessage{"invalid-pose", "pose contains non-finite values"};
      }
    }
    // apply exactly what the log will record
    const auto on_lattice = std::get<PoseUpdate>(quantize(Message{*pose}));
    ingest_pose(entry, on_lattice);
    emit("pose", {{"participant_id", sender}, {"message", message_to_json(on_lattice)}});
    return std::nullopt;
  }
  if (const auto* cmd = std::get_if<FacilitatorCommand>(&m)) {
    FacilitatorCommand q;
    try {
      q = std::get<FacilitatorCommand>(quantize(Message{*cmd}));
    } catch (const ProtocolError& e) {
      return ErrorMessage{"invalid", e.what()};
    }
    return apply_command(sender, q);
  }
  if (std::holds_alternative<Leave>(m)) {
    leave(sender);
    return std::nullopt;
  }
  return ErrorMessage{"unexpected-message", "clients may not send " + std::string(message_tag(m))};
}

std::optional<ErrorMessage> Session::console_command(const FacilitatorCommand& c) {
  FacilitatorCommand q;
  try {
    q = std::get<FacilitatorCommand>(quantize(Message{c}));
  } catch (const ProtocolError& e) {
    return ErrorMessage{"invalid", e.what()};
  }
  auto reply = apply_command(kConsoleSender, q);
  if (reply) {
    if (auto* e = std::get_if<ErrorMessage>(&*reply)) return *e;
  }
  return std::nullopt;
}

std::optional<Message> Session::apply_command(ParticipantId sender, const FacilitatorCommand& c) {
  using K = FacilitatorCommand::Kind;
  const json cmd_json = message_to_json(c);
  auto rejected = [&](std::string code, std::string detail) -> std::optional<Message> {
    emit("command-rejected", {{"participant_id", sender}, {"command", cmd_json}, {"code", code}, {"detail", detail}});
    return ErrorMessage{std::move(code), std::move(detail)};
  };

  RosterEntry* issuer = nullptr;
  if (sender != kConsoleSender) {
    auto it = roster_.find(sender);
    if (it == roster_.end() || it->second.role != Role::facilitator) {
      return rejected("permission", "only the facilitator may issue commands");
    }
    issuer = &it->second;
  }

  try {
    std::vector<MachineEvent> events;
    switch (c.kind) {
      case K::hold: events = machine_.apply(MachineCommand::hold()); break;
      case K::resume: events = machine_.apply(MachineCommand::resume()); break;
      case K::skip: events = machine_.apply(MachineCommand::skip()); break;
      case K::set_override: events = machine_.apply(MachineCommand::set_override(c.key, c.value)); break;
      case K::clear_override: events = machine_.apply(MachineCommand::clear_override(c.key)); break;
      case K::set_scale: sim_ = set_scale(sim_, c.scale); break;
      case K::spectate: {
        auto fac = issuer ? issuer : (facilitator() ? &roster_.at(*facilitator()) : nullptr);
        if (!fac) return rejected("state", "no facilitator connected");
        fac->spectating = c.spectate;
        break;
      }
    }
    emit("command-applied", {{"participant_id", sender}, {"command", cmd_json}});
    emit_machine_events(events);
  } catch (const StateError& e) {
    return rejected("state", e.what());
  } catch (const ValidationError& e) {
    return rejected("invalid", e.what());
  } catch (const DomainError& e) {
    return rejected("invalid", e.what());
  }
  return std::nullopt;
}

void Session::emit_machine_events(const std::vector<MachineEvent>& events) {
  for (const auto& e : events) {
    if (e.kind == MachineEvent::Kind::state_entered) {
      emit("state-entered", {{"index", e.index}, {"name", e.name}, {"at", e.at}});
    } else {
      emit("sequence-finished", {{"at", e.at}});
    }
  }
}

std::vector<InteractionForce> Session::bind_interactions() {
  std::vector<InteractionForce> out;
  for (auto& [id, entry] : roster_) {
    const bool can_grab = entry.role != Role::observer && !entry.spectating && entry.shared_pose;
    for (auto& hand : entry.hands) {
      if (!can_grab) {
        hand.grabbed_bead.reset();
        hand.pinch_started = false;
        continue;
      }
      if (hand.pinch_started) {
        hand.pinch_started = false;
        if (hand.mudra != Mudra::none && !hand.grabbed_bead) {
          hand.grabbed_bead = pick_bead(sim_, hand.shared_position, config_.grab_radius);
        }
      }
      if (hand.grabbed_bead) {
        out.push_back({id, *hand.grabbed_bead, hand.shared_position / sim_.scale, config_.interaction_stiffness,
                       config_.interaction_max_force});
      }
    }
  }
  return out;
}

WorldFrame Session::tick() {
  const double interval = config_.tick_interval();
  ++tick_;

  // 1. pinches -> interaction springs
  const auto interactions = bind_interactions();

  // 2. dynamics, in substeps no longer than the configured dt
  const int substeps = std::max(1, static_cast<int>(std::ceil(interval / config_.integrator.dt - 1e-9)));
  IntegratorParams ip = config_.integrator;
  ip.dt = interval / substeps;
  const SimState last_good = sim_;
  try {
    for (int s = 0; s < substeps; ++s) sim_ = step(sim_, config_.topology, interactions, ip);
  } catch (const IntegrationBlowup& e) {
    sim_ = last_good;
    for (auto& [_, entry] : roster_) {
      for (auto& hand : entry.hands) hand.grabbed_bead.reset();
    }
    emit("session-error", {{"code", "integration-blowup"}, {"detail", e.what()}, {"bead", e.bead()}});
  }

  // 3. script
  if (!machine_.finished()) emit_machine_events(machine_.tick(interval * config_.time_scale));

  // 4. luminosity over visible bodies
  std::vector<const RosterEntry*> visible;
  for (const auto& [_, entry] : roster_) {
    if (entry.visible()) visible.push_back(&entry);
  }
  std::vector<Vec3> centers;
  centers.reserve(visible.size());
  for (const auto* e : visible) centers.push_back(body_center(e->shared_pose->head, config_.kernel));
  const auto lums = body_luminosities(centers, config_.kernel);

  // 5. frame
  WorldFrame f;
  f.tick = tick_;
  f.state_name = machine_.finished() ? std::string() : machine_.current().name;
  for (std::size_t i = 0; i < visible.size(); ++i) {
    const auto& p = *visible[i]->shared_pose;
    f.avatars.push_back({visible[i]->id, p.head, p.left, p.right, lums[i]});
  }
  f.sim_positions = sim_.positions;
  f.group_luminosity = group_luminosity(centers, config_.kernel);
  f.scale = sim_.scale;
  f = std::get<WorldFrame>(quantize(Message{std::move(f)}));

  // 6. record
  emit("frame", {{"frame_tick", f.tick}, {"digest", frame_digest(f)}, {"state_name", f.state_name},
                 {"avatars", f.avatars.size()}, {"group_luminosity", f.group_luminosity}});
  last_frame_ = f;
  return f;
}

json Session::summary() const {
  json roster = json::array();
  for (const auto& [id, e] : roster_) {
    roster.push_back({{"id", id},
                      {"role", std::string(to_string(e.role))},
                      {"label", e.label},
                      {"node_index", e.node_index ? json(*e.node_index) : json(nullptr)},
                      {"spectating", e.spectating},
                      {"last_seq", e.last_seq},
                      {"has_pose", e.shared_pose.has_value()}});
  }
  json overrides = json::object();
  for (const auto& [k, v] : machine_.overrides()) overrides[k] = param_value_to_json(v);
  json names = json::array();
  for (const auto& s : machine_.sequence().states) names.push_back(s.name);
  json params = json::object();
  if (!machine_.finished()) {
    for (const auto& [k, v] : machine_.effective_params()) params[k] = param_value_to_json(v);
  }
  return {{"tick", tick_},
          {"time", time()},
          {"roster", std::move(roster)},
          {"state",
           {{"index", machine_.index()},
            {"name", machine_.finished() ? std::string() : machine_.current().name},
            {"elapsed", machine_.elapsed()},
            {"duration", machine_.current().duration},
            {"mode", std::string(to_string(machine_.mode()))},
            {"overrides", std::move(overrides)},
            {"effective_params", std::move(params)}}},
          {"sequence", std::move(names)},
          {"group_luminosity", last_frame_ ? last_frame_->group_luminosity : 0.0},
          {"scale", sim_.scale}};
}

json Session::snapshot() const {
  json positions = json::array();
  for (const auto& p : sim_.positions) positions.push_back({p.x, p.y, p.z});
  return {{"tick", tick_},
          {"state_index", machine_.index()},
          {"state_name", machine_.finished() ? std::string() : machine_.current().name},
          {"finished", machine_.finished()},
          {"scale", sim_.scale},
          {"sim_positions", std::move(positions)}};
}

std::string frame_digest(const WorldFrame& f) {
  const std::string payload = canonical_payload(f);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : payload) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace presence
