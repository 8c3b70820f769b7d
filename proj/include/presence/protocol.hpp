// SPDX-License-Identifier: Apache-2.0
//
// Wire protocol. Every frame is a 4-byte big-endian payload length followed
// by the canonical JSON of one message (UTF-8, sorted keys, no whitespace).
// Positions travel as integer multiples of 1e-4 m; quaternion components,
// luminosities and scale as integer multiples of 1e-6.
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "presence/spatial.hpp"
#include "presence/states.hpp"

namespace presence {

inline constexpr int kProtocolVersion = 1;
inline constexpr std::uint16_t kDefaultPort = 38801;
inline constexpr std::size_t kMaxPayload = 1u << 20;
inline constexpr double kPositionQuantum = 1e-4;
inline constexpr double kAngleQuantum = 1e-6;

enum class Role { participant, facilitator, observer };
std::string_view to_string(Role r);
std::optional<Role> parse_role(std::string_view s);

enum class Mudra { none, index, middle };
std::string_view to_string(Mudra m);
std::optional<Mudra> parse_mudra(std::string_view s);

using ParticipantId = std::uint32_t;

struct JoinRequest {
  int version = kProtocolVersion;
  Role role = Role::participant;
  std::string node_label;
  bool operator==(const JoinRequest&) const = default;
};

struct JoinAccept {
  ParticipantId participant_id = 0;
  nlohmann::json session_config = nlohmann::json::object();
  int node_index = -1;  // -1 for roles without a node slot
  int n_participants = 0;
  nlohmann::json snapshot = nlohmann::json::object();
  bool operator==(const JoinAccept&) const = default;
};

struct JoinReject {
  std::string reason;
  bool operator==(const JoinReject&) const = default;
};

struct PoseUpdate {
  std::int64_t seq = 0;
  Pose head;
  Pose left;
  Pose right;
  Mudra mudra_left = Mudra::none;
  Mudra mudra_right = Mudra::none;
  bool operator==(const PoseUpdate&) const = default;
};

struct Ping {
  std::uint64_t nonce = 0;
  bool operator==(const Ping&) const = default;
};

struct Pong {
  std::uint64_t nonce = 0;
  bool operator==(const Pong&) const = default;
};

struct FacilitatorCommand {
  enum class Kind { hold, resume, skip, set_override, clear_override, set_scale, spectate };
  Kind kind = Kind::hold;
  std::string key;             // set_override / clear_override
  ParamValue value = 0.0;      // set_override
  double scale = 1.0;          // set_scale
  bool spectate = false;       // spectate
  bool operator==(const FacilitatorCommand&) const = default;
};

struct AvatarState {
  ParticipantId id = 0;
  Pose head;
  Pose left;
  Pose right;
  double luminosity = 0.0;
  bool operator==(const AvatarState&) const = default;
};

struct WorldFrame {
  std::uint64_t tick = 0;
  std::string state_name;
  std::vector<AvatarState> avatars;
  std::vector<Vec3> sim_positions;
  double group_luminosity = 0.0;
  double scale = 1.0;
  bool operator==(const WorldFrame&) const = default;
};

struct Leave {
  bool operator==(const Leave&) const = default;
};

struct ErrorMessage {
  std::string code;
  std::string detail;
  bool operator==(const ErrorMessage&) const = default;
};

using Message = std::variant<JoinRequest, JoinAccept, JoinReject, PoseUpdate, Ping, Pong, FacilitatorCommand,
                             WorldFrame, Leave, ErrorMessage>;

/// Wire tag of the message ("join_request", "world_frame", ...).
std::string_view message_tag(const Message& m);

nlohmann::json message_to_json(const Message& m);
/// Throws ProtocolError on an unknown tag or malformed fields.
Message message_from_json(const nlohmann::json& j);

std::string canonical_payload(const Message& m);

using Bytes = std::vector<std::uint8_t>;

/// Throws ProtocolError when the payload exceeds kMaxPayload.
Bytes encode(const Message& m);

struct DecodeResult {
  enum class Status { ok, need_more_data, protocol_error, version_mismatch };
  Status status = Status::need_more_data;
  std::optional<Message> message;
  std::size_t consumed = 0;  // bytes of the frame; the rest is remainder
  std::string error;
  int peer_version = 0;      // set for version_mismatch

  bool ok() const { return status == Status::ok; }
};

/// Parses the first frame of `bytes`. Never throws.
DecodeResult decode(std::span<const std::uint8_t> bytes);

/// Latest-wins sequencing: keep iff incoming.seq > last_seq.
enum class PoseVerdict { keep, drop };
PoseVerdict accept_pose(std::int64_t last_seq, const PoseUpdate& incoming);

/// Accumulates stream bytes and yields whole frames.
class FrameReader {
 public:
  void append(std::span<const std::uint8_t> bytes);
  /// Next decoded frame, need_more_data, or an error (stream unusable).
  DecodeResult next();
  std::size_t buffered() const { return buffer_.size() - offset_; }

 private:
  Bytes buffer_;
  std::size_t offset_ = 0;
};

/// Rounds a value onto the wire lattice as the codec does.
double quantize_position(double v);
double quantize_angle(double v);
Pose quantize(const Pose& p);
Message quantize(const Message& m);

}  // namespace presence
