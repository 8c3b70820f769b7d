// SPDX-License-Identifier: Apache-2.0
#include "presence/event_log.hpp"

#include <iostream>
#include <stdexcept>

#include "presence/errors.hpp"

namespace presence {

using nlohmann::json;

JsonlLog::JsonlLog(const std::string& path, ErrorCallback on_error)
    : path_(path), out_(path, std::ios::out | std::ios::trunc), on_error_(std::move(on_error)) {
  if (!out_) throw std::runtime_error("cannot open session log '" + path + "'");
}

JsonlLog::~JsonlLog() { close(); }

void JsonlLog::fail(const std::string& why) {
  enabled_ = false;
  const std::string msg = "session log '" + path_ + "' disabled: " + why;
  if (on_error_) {
    on_error_(msg);
  } else {
    std::cerr << msg << '\n';
  }
}

void JsonlLog::write(const SessionEvent& e) {
  if (!enabled_) return;
  out_ << e.to_json().dump() << '\n';
  if (!out_) {
    fail("write failed");
    return;
  }
  ++lines_;
}

void JsonlLog::flush() {
  if (!enabled_) return;
  out_.flush();
  if (!out_) fail("flush failed");
}

void JsonlLog::close() {
  if (out_.is_open()) {
    flush();
    out_.close();
  }
}

json ReplayReport::to_json() const {
  return {{"events", events},
          {"frames", frames},
          {"mismatches", mismatches},
          {"first_mismatch_tick", first_mismatch_tick ? json(*first_mismatch_tick) : json(nullptr)},
          {"final_tick", final_tick},
          {"final_digest", final_digest},
          {"final_state", final_state},
          {"identical", identical()}};
}

ReplayReport replay_log(std::istream& in) {
  ReplayReport report;
  std::optional<Session> session;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no);
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw SchemaError(where, "malformed JSON");
    SessionEvent e = SessionEvent::from_json(j);
    ++report.events;

    if (e.type == "session-start") {
      if (session) throw SchemaError(where, "second session-start");
      session.emplace(session_config_from_json(e.detail.at("config")));
      continue;
    }
    if (!session) throw SchemaError(where, "log does not begin with session-start");

    try {
      if (e.type == "joined" || e.type == "join-rejected") {
        JoinRequest req;
        req.role = parse_role(e.detail.at("role").get<std::string>()).value_or(Role::observer);
        req.node_label = e.detail.value("node_label", std::string());
        req.version = e.detail.value("version", kProtocolVersion);
        auto outcome = session->handle_join(req);
        const bool accepted = std::holds_alternative<JoinAccept>(outcome);
        if (accepted != (e.type == "joined") ||
            (accepted && std::get<JoinAccept>(outcome).participant_id != e.detail.at("participant_id").get<ParticipantId>())) {
          ++report.mismatches;
          if (!report.first_mismatch_tick) report.first_mismatch_tick = e.tick;
        }
      } else if (e.type == "left") {
        session->leave(e.detail.at("participant_id").get<ParticipantId>());
      } else if (e.type == "pose") {
        session->ingest(e.detail.at("participant_id").get<ParticipantId>(), message_from_json(e.detail.at("message")));
      } else if (e.type == "command-applied" || e.type == "command-rejected") {
        const auto sender = e.detail.at("participant_id").get<ParticipantId>();
        auto cmd = std::get<FacilitatorCommand>(message_from_json(e.detail.at("command")));
        if (sender == kConsoleSender) {
          session->console_command(cmd);
        } else {
          session->ingest(sender, cmd);
        }
      } else if (e.type == "frame") {
        const WorldFrame f = session->tick();
        ++report.frames;
        report.final_tick = f.tick;
        report.final_digest = frame_digest(f);
        report.final_state = f.state_name;
        if (f.tick != e.detail.at("frame_tick").get<std::uint64_t>() ||
            report.final_digest != e.detail.at("digest").get<std::string>()) {
          ++report.mismatches;
          if (!report.first_mismatch_tick) report.first_mismatch_tick = f.tick;
        }
      }
      // state-entered, sequence-finished and session-error are derived
    } catch (const json::exception& ex) {
      throw SchemaError(where, ex.what());
    }
  }
  if (!session) throw SchemaError("$", "empty log");
  return report;
}

}  // namespace presence
