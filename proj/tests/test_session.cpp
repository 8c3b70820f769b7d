// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "presence/errors.hpp"
#include "presence/event_log.hpp"
#include "presence/session.hpp"

using namespace presence;

namespace {

SessionConfig small_config() {
  SessionConfig c;
  c.sequences.push_back(parse_sequence(R"({"version":1,"phase":"journey","states":[
      {"name":"one","duration":1,"params":{}},{"name":"two","duration":1,"params":{"global.light_level":0.9}}]})"));
  return c;
}

ParticipantId join(Session& s, Role role, const std::string& label = "node") {
  auto out = s.handle_join({kProtocolVersion, role, label});
  REQUIRE(std::holds_alternative<JoinAccept>(out));
  return std::get<JoinAccept>(out).participant_id;
}

PoseUpdate pose_at(std::int64_t seq, Vec3 head, Mudra right = Mudra::none, Vec3 right_hand = {0.2, 1.2, 0.3}) {
  PoseUpdate p;
  p.seq = seq;
  p.head = {head, {}};
  p.left = {head + Vec3{-0.2, -0.4, 0.0}, {}};
  p.right = {right_hand, {}};
  p.mudra_right = right;
  return p;
}

std::string to_jsonl(const std::vector<SessionEvent>& events) {
  std::string out;
  for (const auto& e : events) out += e.to_json().dump() + "\n";
  return out;
}

}  // namespace

TEST_CASE("joins and node slots") {
  Session s(small_config());
  auto first = s.handle_join({kProtocolVersion, Role::participant, "a"});
  REQUIRE(std::holds_alternative<JoinAccept>(first));
  CHECK(std::get<JoinAccept>(first).node_index == 0);
  CHECK(std::get<JoinAccept>(first).n_participants == 5);
  for (int i = 0; i < 4; ++i) join(s, Role::participant);
  auto sixth = s.handle_join({kProtocolVersion, Role::participant, "f"});
  REQUIRE(std::holds_alternative<JoinReject>(sixth));
  CHECK(std::get<JoinReject>(sixth).reason == "session full");
  CHECK(std::holds_alternative<JoinAccept>(s.handle_join({kProtocolVersion, Role::observer, "o"})));
  join(s, Role::facilitator);
  auto second_fac = s.handle_join({kProtocolVersion, Role::facilitator, "g"});
  CHECK(std::holds_alternative<JoinReject>(second_fac));
  auto old = s.handle_join({kProtocolVersion + 1, Role::participant, "v"});
  REQUIRE(std::holds_alternative<JoinReject>(old));
  CHECK(std::get<JoinReject>(old).reason.find("version") != std::string::npos);

  // a freed slot is reused, lowest first
  s.leave(3);
  s.leave(2);
  auto back = s.handle_join({kProtocolVersion, Role::participant, "h"});
  REQUIRE(std::holds_alternative<JoinAccept>(back));
  CHECK(std::get<JoinAccept>(back).node_index == 1);
  std::set<int> used;
  for (const auto& [_, e] : s.roster()) {
    if (e.node_index) CHECK(used.insert(*e.node_index).second);
  }
  for (int n : used) CHECK(n < 5);
}

TEST_CASE("config validation") {
  SessionConfig c = small_config();
  c.max_participants = 6;
  CHECK_THROWS(c.validate());
  c.max_participants = 0;
  CHECK_THROWS(c.validate());
  c = small_config();
  c.tick_rate = 0;
  CHECK_THROWS(c.validate());
  const auto round = session_config_from_json(to_json(small_config()));
  CHECK(to_json(round) == to_json(small_config()));
  CHECK_THROWS_AS(session_config_from_json({{"tick_rte", 30}}), SchemaError);
}

TEST_CASE("poses") {
  Session s(small_config());
  const auto a = join(s, Role::participant);
  CHECK(s.tick().avatars.empty());  // not visible before a pose
  s.ingest(a, pose_at(5, {0.0, 1.6, 0.5}));
  const auto* e = s.find(a);
  REQUIRE(e->shared_pose);
  const Vec3 kept = e->shared_pose->head.position;
  s.ingest(a, pose_at(5, {1.0, 1.6, 0.5}));
  s.ingest(a, pose_at(3, {1.0, 1.6, 0.5}));
  CHECK(s.find(a)->shared_pose->head.position == kept);
  CHECK(s.find(a)->last_seq == 5);
  CHECK(s.tick().avatars.size() == 1);

  auto reply = s.ingest(a, Ping{42});
  REQUIRE(reply);
  CHECK(std::get<Pong>(*reply).nonce == 42);
  CHECK(s.ingest(999, Ping{1}).has_value());
}

TEST_CASE("node frames compose into the shared world") {
  Session s(small_config());
  const auto a = join(s, Role::participant);
  const auto b = join(s, Role::participant);
  // node 1 of 5 is rotated by 72 degrees; its local +z lands elsewhere
  s.ingest(a, pose_at(1, {0.0, 1.6, 1.0}));
  s.ingest(b, pose_at(1, {0.0, 1.6, 1.0}));
  const Vec3 pa = s.find(a)->shared_pose->head.position;
  const Vec3 pb = s.find(b)->shared_pose->head.position;
  CHECK((pa - Vec3{0, 1.6, 1.0}).norm() < 1e-12);
  const Vec3 expect = radial_transform(1, 5).apply({0.0, 1.6, 1.0});
  CHECK((pb - expect).norm() < 1e-12);
}

TEST_CASE("coincident bodies brighten") {
  Session s(small_config());
  const auto a = join(s, Role::participant);
  const auto b = join(s, Role::participant);
  s.ingest(a, pose_at(1, {0.0, 1.6, 0.0}));
  s.ingest(b, pose_at(1, {0.0, 1.6, 0.0}));
  const auto f = s.tick();
  REQUIRE(f.avatars.size() == 2);
  CHECK(f.group_luminosity == doctest::Approx(3.0));
  for (const auto& av : f.avatars) CHECK(av.luminosity > 1.0);
}

TEST_CASE("ticks, substeps and the state script") {
  Session s(small_config());
  const auto f1 = s.tick();
  CHECK(f1.tick == 1);
  CHECK(f1.avatars.empty());
  CHECK(f1.state_name == "one");
  CHECK(s.sim().time == doctest::Approx(1.0 / 30.0).epsilon(1e-12));
  const auto before = s.sim().positions;
  const auto f2 = s.tick();
  CHECK(f2.tick == 2);
  CHECK(s.sim().positions != before);
  for (int i = 0; i < 40; ++i) s.tick();
  CHECK(s.last_frame()->state_name == "two");
  for (int i = 0; i < 40; ++i) s.tick();
  CHECK(s.last_frame()->state_name.empty());
  CHECK(s.machine().finished());
}

TEST_CASE("held start waits for the facilitator") {
  auto cfg = small_config();
  cfg.start_held = true;
  Session s(cfg);
  for (int i = 0; i < 90; ++i) s.tick();
  CHECK(s.machine().index() == 0);
  CHECK(s.machine().elapsed() == 0.0);
  const auto f = join(s, Role::facilitator);
  s.ingest(f, FacilitatorCommand{FacilitatorCommand::Kind::resume});
  for (int i = 0; i < 40; ++i) s.tick();
  CHECK(s.machine().index() == 1);
}

TEST_CASE("facilitator commands") {
  using K = FacilitatorCommand::Kind;
  Session s(small_config());
  const auto p = join(s, Role::participant);
  const auto f = join(s, Role::facilitator);

  SUBCASE("participants are refused and nothing changes") {
    EventRecorder rec;
    s.add_sink(&rec);
    const auto before = s.summary();
    auto reply = s.ingest(p, FacilitatorCommand{K::skip});
    REQUIRE(reply);
    CHECK(std::get<ErrorMessage>(*reply).code == "permission");
    FacilitatorCommand ov{K::set_override, "global.light_level", 0.1};
    s.ingest(p, ov);
    CHECK(s.summary() == before);
    CHECK(rec.events.back().type == "command-rejected");
  }
  SUBCASE("spectate hides the facilitator") {
    s.ingest(f, pose_at(1, {0, 1.6, 0}));
    CHECK(s.tick().avatars.size() == 1);
    FacilitatorCommand spec{K::spectate};
    spec.spectate = true;
    CHECK_FALSE(s.ingest(f, spec).has_value());
    CHECK(s.find(f)->spectating);
    s.ingest(p, pose_at(1, {0, 1.6, 0.5}));
    const auto frame = s.tick();
    REQUIRE(frame.avatars.size() == 1);
    CHECK(frame.avatars[0].id == p);
  }
  SUBCASE("scale shows up in the next frame") {
    FacilitatorCommand sc{K::set_scale};
    sc.scale = 2.0;
    s.ingest(f, sc);
    CHECK(s.tick().scale == 2.0);
    sc.scale = 0.0;
    auto bad = s.ingest(f, sc);
    REQUIRE(bad);
    CHECK(std::get<ErrorMessage>(*bad).code == "invalid");
  }
  SUBCASE("machine commands route through") {
    s.ingest(f, FacilitatorCommand{K::skip});
    CHECK(s.machine().index() == 1);
    FacilitatorCommand ov{K::set_override, "global.light_level", 0.25};
    s.ingest(f, ov);
    CHECK(std::get<double>(s.machine().effective_params().at("global.light_level")) == 0.25);
    s.ingest(f, FacilitatorCommand{K::clear_override, "global.light_level"});
    CHECK(s.machine().overrides().empty());
    s.ingest(f, FacilitatorCommand{K::skip});
    auto again = s.ingest(f, FacilitatorCommand{K::skip});
    REQUIRE(again);
    CHECK(std::get<ErrorMessage>(*again).code == "state");
  }
  SUBCASE("console commands need no roster entry") {
    CHECK_FALSE(s.console_command(FacilitatorCommand{K::hold}).has_value());
    CHECK(s.machine().mode() == StateMachine::Mode::held);
  }
}

TEST_CASE("pinching a bead moves the thread") {
  auto run = [](bool pinch) {
    Session s(small_config());
    const auto a = join(s, Role::participant);
    const Vec3 bead = s.sim().positions[0];
    s.ingest(a, pose_at(1, {0, 1.6, 0.5}, Mudra::none, bead));
    s.tick();
    s.ingest(a, pose_at(2, {0, 1.6, 0.5}, pinch ? Mudra::index : Mudra::none, bead));
    s.tick();
    s.ingest(a, pose_at(3, {0, 1.6, 0.5}, pinch ? Mudra::index : Mudra::none, bead + Vec3{0, 0.3, 0}));
    for (int i = 0; i < 10; ++i) s.tick();
    return s.sim().positions[0];
  };
  const Vec3 pulled = run(true);
  const Vec3 control = run(false);
  CHECK(pulled.y - control.y > 0.05);
}

TEST_CASE("event log replays to identical frames") {
  auto cfg = small_config();
  EventRecorder rec;
  {
    Session s(cfg);
    s.add_sink(&rec);
    const auto a = join(s, Role::participant);
    const auto b = join(s, Role::participant);
    const auto f = join(s, Role::facilitator);
    FacilitatorCommand spec{FacilitatorCommand::Kind::spectate};
    spec.spectate = true;
    s.ingest(f, spec);
    for (int t = 0; t < 90; ++t) {
      s.ingest(a, pose_at(t + 1, {0.3 - 0.003 * t, 1.6, 0.0}, t > 10 ? Mudra::index : Mudra::none,
                          s.sim().positions[3]));
      if (t % 3 == 0) s.ingest(b, pose_at(t + 1, {0.0, 1.6, 0.4}));
      if (t == 20) s.ingest(a, FacilitatorCommand{FacilitatorCommand::Kind::skip});
      if (t == 30) s.console_command({FacilitatorCommand::Kind::set_override, "global.light_level", 0.3});
      if (t == 50) s.leave(b);
      s.tick();
    }
  }
  REQUIRE(rec.events.front().type == "session-start");
  std::istringstream in(to_jsonl(rec.events));
  const auto report = replay_log(in);
  CHECK(report.identical());
  CHECK(report.frames == 90);
  CHECK(report.final_tick == 90);

  SUBCASE("a tampered digest is caught") {
    auto events = rec.events;
    for (auto& e : events) {
      if (e.type == "frame" && e.detail["frame_tick"] == 40) e.detail["digest"] = "0000000000000000";
    }
    std::istringstream bad(to_jsonl(events));
    const auto r = replay_log(bad);
    CHECK_FALSE(r.identical());
    CHECK(r.first_mismatch_tick == std::optional<std::uint64_t>(40));
  }
  SUBCASE("a log needs its header") {
    std::istringstream headless(to_jsonl({rec.events.begin() + 1, rec.events.end()}));
    CHECK_THROWS_AS(replay_log(headless), SchemaError);
  }
}

TEST_CASE("JSONL sink") {
  const std::string path = "session_log_test.jsonl";
  {
    JsonlLog log(path);
    Session s(small_config());
    s.add_sink(&log);
    join(s, Role::participant, "alpha");
    s.tick();
    log.flush();
    CHECK(log.lines_written() == 3);
  }
  std::ifstream in(path);
  std::string line;
  std::vector<nlohmann::json> lines;
  while (std::getline(in, line)) lines.push_back(nlohmann::json::parse(line));
  REQUIRE(lines.size() == 3);
  CHECK(lines[1]["type"] == "joined");
  CHECK(lines[1]["participant_id"] == 1);
  std::remove(path.c_str());

  CHECK_THROWS(JsonlLog("/nonexistent-dir/x/log.jsonl"));

  int reports = 0;
  JsonlLog full("/dev/full", [&](const std::string&) { ++reports; });
  Session s(small_config());
  s.add_sink(&full);
  for (int i = 0; i < 2000; ++i) s.tick();
  full.flush();
  CHECK(reports == 1);
  CHECK_FALSE(full.enabled());
}

TEST_CASE("summary and snapshot") {
  Session s(small_config());
  const auto f = join(s, Role::facilitator);
  FacilitatorCommand spec{FacilitatorCommand::Kind::spectate};
  spec.spectate = true;
  s.ingest(f, spec);
  const auto j = s.summary();
  CHECK(j["roster"].size() == 1);
  CHECK(j["roster"][0]["spectating"] == true);
  CHECK(j["state"]["index"] == 0);
  CHECK(j["state"]["name"] == "one");
  CHECK(s.snapshot()["sim_positions"].size() == 40);
}
