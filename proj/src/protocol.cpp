// SPDX-License-Identifier: Apache-2.0
#include "presence/protocol.hpp"

#include <cmath>

#include "presence/errors.hpp"

namespace presence {

using nlohmann::json;

namespace {

constexpr double kPositionScale = 10000.0;
constexpr double kAngleScale = 1000000.0;
constexpr double kMaxWireMagnitude = 1e12;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::int64_t to_units(double v, double scale) {
  if (!std::isfinite(v) || std::abs(v) > kMaxWireMagnitude) {
    throw ProtocolError("value not representable on the wire");
  }
  return std::llround(v * scale);
}

double from_units(const json& j, double scale) {
  if (!j.is_number_integer()) throw ProtocolError("expected an integer quantity");
  return static_cast<double>(j.get<std::int64_t>()) / scale;
}

json vec_json(const Vec3& v) {
  return json::array({to_units(v.x, kPositionScale), to_units(v.y, kPositionScale), to_units(v.z, kPositionScale)});
}

Vec3 vec_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ProtocolError("position must be a 3-array");
  return {from_units(j[0], kPositionScale), from_units(j[1], kPositionScale), from_units(j[2], kPositionScale)};
}

json pose_json(const Pose& p) {
  const Quat& q = p.orientation;
  return {{"p", vec_json(p.position)},
          {"q", json::array({to_units(q.w, kAngleScale), to_units(q.x, kAngleScale), to_units(q.y, kAngleScale),
                             to_units(q.z, kAngleScale)})}};
}

Pose pose_from(const json& j) {
  if (!j.is_object() || !j.contains("p") || !j.contains("q")) throw ProtocolError("pose needs p and q");
  const auto& q = j.at("q");
  if (!q.is_array() || q.size() != 4) throw ProtocolError("orientation must be a 4-array");
  return {vec_from(j.at("p")),
          {from_units(q[0], kAngleScale), from_units(q[1], kAngleScale), from_units(q[2], kAngleScale),
           from_units(q[3], kAngleScale)}};
}

const json& field(const json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end()) throw ProtocolError(std::string("missing field '") + name + "'");
  return *it;
}

std::string str_field(const json& j, const char* name) {
  const auto& v = field(j, name);
  if (!v.is_string()) throw ProtocolError(std::string("field '") + name + "' must be a string");
  return v.get<std::string>();
}

template <class Int>
Int int_field(const json& j, const char* name) {
  const auto& v = field(j, name);
  if (!v.is_number_integer()) throw ProtocolError(std::string("field '") + name + "' must be an integer");
  if constexpr (std::is_unsigned_v<Int>) {
    if (!v.is_number_unsigned()) throw ProtocolError(std::string("field '") + name + "' must be unsigned");
  }
  return v.get<Int>();
}

std::string_view command_action(FacilitatorCommand::Kind k) {
  using K = FacilitatorCommand::Kind;
  switch (k) {
    case K::hold: return "hold";
    case K::resume: return "resume";
    case K::skip: return "skip";
    case K::set_override: return "set_override";
    case K::clear_override: return "clear_override";
    case K::set_scale: return "set_scale";
    case K::spectate: return "spectate";
  }
  return "hold";
}

std::optional<FacilitatorCommand::Kind> parse_action(std::string_view s) {
  using K = FacilitatorCommand::Kind;
  for (K k : {K::hold, K::resume, K::skip, K::set_override, K::clear_override, K::set_scale, K::spectate}) {
    if (command_action(k) == s) return k;
  }
  return std::nullopt;
}

Mudra mudra_field(const json& j, const char* name) {
  auto m = parse_mudra(str_field(j, name));
  if (!m) throw ProtocolError(std::string("bad mudra in '") + name + "'");
  return *m;
}

void put_u32_be(Bytes& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace

std::string_view to_string(Role r) {
  switch (r) {
    case Role::participant: return "participant";
    case Role::facilitator: return "facilitator";
    case Role::observer: return "observer";
  }
  return "participant";
}

std::optional<Role> parse_role(std::string_view s) {
  if (s == "participant") return Role::participant;
  if (s == "facilitator") return Role::facilitator;
  if (s == "observer") return Role::observer;
  return std::nullopt;
}

std::string_view to_string(Mudra m) {
  switch (m) {
    case Mudra::none: return "none";
    case Mudra::index: return "index";
    case Mudra::middle: return "middle";
  }
  return "none";
}

std::optional<Mudra> parse_mudra(std::string_view s) {
  if (s == "none") return Mudra::none;
  if (s == "index") return Mudra::index;
  if (s == "middle") return Mudra::middle;
  return std::nullopt;
}

std::string_view message_tag(const Message& m) {
  return std::visit(overloaded{
                        [](const JoinRequest&) { return std::string_view("join_request"); },
                        [](const JoinAccept&) { return std::string_view("join_accept"); },
                        [](const JoinReject&) { return std::string_view("join_reject"); },
                        [](const PoseUpdate&) { return std::string_view("pose_update"); },
                        [](const Ping&) { return std::string_view("ping"); },
                        [](const Pong&) { return std::string_view("pong"); },
                        [](const FacilitatorCommand&) { return std::string_view("facilitator_command"); },
                        [](const WorldFrame&) { return std::string_view("world_frame"); },
                        [](const Leave&) { return std::string_view("leave"); },
                        [](const ErrorMessage&) { return std::string_view("error"); },
                    },
                    m);
}

json message_to_json(const Message& m) {
  json j = std::visit(
      overloaded{
          [](const JoinRequest& r) -> json {
            return {{"version", r.version}, {"role", std::string(to_string(r.role))}, {"node_label", r.node_label}};
          },
          [](const JoinAccept& a) -> json {
            return {{"participant_id", a.participant_id}, {"session_config", a.session_config},
                    {"node_index", a.node_index}, {"n_participants", a.n_participants}, {"snapshot", a.snapshot}};
          },
          [](const JoinReject& r) -> json { return {{"reason", r.reason}}; },
          [](const PoseUpdate& p) -> json {
            return {{"seq", p.seq},
                    {"head", pose_json(p.head)},
                    {"left", pose_json(p.left)},
                    {"right", pose_json(p.right)},
                    {"mudra_left", std::string(to_string(p.mudra_left))},
                    {"mudra_right", std::string(to_string(p.mudra_right))}};
          },
          [](const Ping& p) -> json { return {{"nonce", p.nonce}}; },
          [](const Pong& p) -> json { return {{"nonce", p.nonce}}; },
          [](const FacilitatorCommand& c) -> json {
            using K = FacilitatorCommand::Kind;
            json out{{"action", std::string(command_action(c.kind))}};
            if (c.kind == K::set_override || c.kind == K::clear_override) out["key"] = c.key;
            if (c.kind == K::set_override) out["value"] = param_value_to_json(c.value);
            if (c.kind == K::set_scale) out["scale"] = to_units(c.scale, kAngleScale);
            if (c.kind == K::spectate) out["spectate"] = c.spectate;
            return out;
          },
          [](const WorldFrame& f) -> json {
            json avatars = json::array();
            for (const auto& a : f.avatars) {
              avatars.push_back({{"id", a.id},
                                 {"head", pose_json(a.head)},
                                 {"left", pose_json(a.left)},
                                 {"right", pose_json(a.right)},
                                 {"luminosity", to_units(a.luminosity, kAngleScale)}});
            }
            json sim = json::array();
            for (const auto& p : f.sim_positions) sim.push_back(vec_json(p));
            return {{"tick", f.tick},
                    {"state_name", f.state_name},
                    {"avatars", std::move(avatars)},
                    {"sim_positions", std::move(sim)},
                    {"group_luminosity", to_units(f.group_luminosity, kAngleScale)},
                    {"scale", to_units(f.scale, kAngleScale)}};
          },
          [](const Leave&) -> json { return json::object(); },
          [](const ErrorMessage& e) -> json { return {{"code", e.code}, {"detail", e.detail}}; },
      },
      m);
  j["type"] = std::string(message_tag(m));
  return j;
}

Message message_from_json(const json& j) {
  if (!j.is_object()) throw ProtocolError("message must be a JSON object");
  const std::string tag = str_field(j, "type");
  try {
    if (tag == "join_request") {
      JoinRequest r;
      r.version = int_field<int>(j, "version");
      auto role = parse_role(str_field(j, "role"));
      if (!role) throw ProtocolError("unknown role");
      r.role = *role;
      r.node_label = str_field(j, "node_label");
      return r;
    }
    if (tag == "join_accept") {
      JoinAccept a;
      a.participant_id = int_field<ParticipantId>(j, "participant_id");
      a.session_config = field(j, "session_config");
      a.node_index = int_field<int>(j, "node_index");
      a.n_participants = int_field<int>(j, "n_participants");
      a.snapshot = field(j, "snapshot");
      return a;
    }
    if (tag == "join_reject") return JoinReject{str_field(j, "reason")};
    if (tag == "pose_update") {
      PoseUpdate p;
      p.seq = int_field<std::int64_t>(j, "seq");
      p.head = pose_from(field(j, "head"));
      p.left = pose_from(field(j, "left"));
      p.right = pose_from(field(j, "right"));
      p.mudra_left = mudra_field(j, "mudra_left");
      p.mudra_right = mudra_field(j, "mudra_right");
      return p;
    }
    if (tag == "ping") return Ping{int_field<std::uint64_t>(j, "nonce")};
    if (tag == "pong") return Pong{int_field<std::uint64_t>(j, "nonce")};
    if (tag == "facilitator_command") {
      using K = FacilitatorCommand::Kind;
      FacilitatorCommand c;
      auto kind = parse_action(str_field(j, "action"));
      if (!kind) throw ProtocolError("unknown facilitator action");
      c.kind = *kind;
      if (c.kind == K::set_override || c.kind == K::clear_override) c.key = str_field(j, "key");
      if (c.kind == K::set_override) {
        const auto& v = field(j, "value");
        if (v.is_string()) {
          c.value = v.get<std::string>();
        } else if (v.is_number()) {
          c.value = v.get<double>();
        } else {
          throw ProtocolError("override value must be a number or string");
        }
      }
      if (c.kind == K::set_scale) c.scale = from_units(field(j, "scale"), kAngleScale);
      if (c.kind == K::spectate) {
        const auto& v = field(j, "spectate");
        if (!v.is_boolean()) throw ProtocolError("spectate must be a boolean");
        c.spectate = v.get<bool>();
      }
      return c;
    }
    if (tag == "world_frame") {
      WorldFrame f;
      f.tick = int_field<std::uint64_t>(j, "tick");
      f.state_name = str_field(j, "state_name");
      const auto& avatars = field(j, "avatars");
      if (!avatars.is_array()) throw ProtocolError("avatars must be an array");
      for (const auto& a : avatars) {
        if (!a.is_object()) throw ProtocolError("avatar must be an object");
        f.avatars.push_back({int_field<ParticipantId>(a, "id"), pose_from(field(a, "head")),
                             pose_from(field(a, "left")), pose_from(field(a, "right")),
                             from_units(field(a, "luminosity"), kAngleScale)});
      }
      const auto& sim = field(j, "sim_positions");
      if (!sim.is_array()) throw ProtocolError("sim_positions must be an array");
      for (const auto& p : sim) f.sim_positions.push_back(vec_from(p));
      f.group_luminosity = from_units(field(j, "group_luminosity"), kAngleScale);
      f.scale = from_units(field(j, "scale"), kAngleScale);
      return f;
    }
    if (tag == "leave") return Leave{};
    if (tag == "error") return ErrorMessage{str_field(j, "code"), str_field(j, "detail")};
  } catch (const json::exception& e) {
    throw ProtocolError(tag + ": " + e.what());
  }
  throw ProtocolError("unknown message tag '" + tag + "'");
}

std::string canonical_payload(const Message& m) {
  try {
    return message_to_json(m).dump();
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("cannot serialize message: ") + e.what());
  }
}

Bytes encode(const Message& m) {
  const std::string payload = canonical_payload(m);
  if (payload.size() > kMaxPayload) {
    throw ProtocolError("payload of " + std::to_string(payload.size()) + " bytes exceeds frame limit");
  }
  Bytes out;
  out.reserve(payload.size() + 4);
  put_u32_be(out, static_cast<std::uint32_t>(payload.size()));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

DecodeResult decode(std::span<const std::uint8_t> bytes) {
  DecodeResult r;
  if (bytes.size() < 4) return r;
  const std::uint32_t len = (std::uint32_t{bytes[0]} << 24) | (std::uint32_t{bytes[1]} << 16) |
                            (std::uint32_t{bytes[2]} << 8) | std::uint32_t{bytes[3]};
  if (len > kMaxPayload) {
    r.status = DecodeResult::Status::protocol_error;
    r.error = "frame length " + std::to_string(len) + " exceeds limit";
    return r;
  }
  if (len == 0) {
    r.status = DecodeResult::Status::protocol_error;
    r.error = "empty frame";
    r.consumed = 4;
    return r;
  }
  if (bytes.size() < 4 + std::size_t{len}) return r;

  r.consumed = 4 + std::size_t{len};
  const auto payload = bytes.subspan(4, len);
  json j = json::parse(payload.begin(), payload.end(), nullptr, false);
  if (j.is_discarded()) {
    r.status = DecodeResult::Status::protocol_error;
    r.error = "malformed JSON payload";
    return r;
  }
  try {
    r.message = message_from_json(j);
  } catch (const std::exception& e) {
    r.status = DecodeResult::Status::protocol_error;
    r.error = e.what();
    return r;
  }
  if (const auto* join = std::get_if<JoinRequest>(&*r.message); join && join->version != kProtocolVersion) {
    r.status = DecodeResult::Status::version_mismatch;
    r.peer_version = join->version;
    r.error = "protocol version mismatch: expected " + std::to_string(kProtocolVersion) + ", got " +
              std::to_string(join->version);
    return r;
  }
  r.status = DecodeResult::Status::ok;
  return r;
}

PoseVerdict accept_pose(std::int64_t last_seq, const PoseUpdate& incoming) {
  return incoming.seq > last_seq ? PoseVerdict::keep : PoseVerdict::drop;
}

void FrameReader::append(std::span<const std::uint8_t> bytes) {
  if (offset_ > 0 && offset_ >= buffer_.size() / 2) {
    buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(offset_));
    offset_ = 0;
  }
  buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
}

DecodeResult FrameReader::next() {
  auto r = decode(std::span<const std::uint8_t>(buffer_).subspan(offset_));
  offset_ += r.consumed;
  return r;
}

double quantize_position(double v) { return static_cast<double>(to_units(v, kPositionScale)) / kPositionScale; }

double quantize_angle(double v) { return static_cast<double>(to_units(v, kAngleScale)) / kAngleScale; }

Pose quantize(const Pose& p) { return pose_from(pose_json(p)); }

Message quantize(const Message& m) { return message_from_json(message_to_json(m)); }

}  // namespace presence
