// SPDX-License-Identifier: Apache-2.0
#include "presence/botclient.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <deque>
#include <fstream>
#include <future>
#include <limits>
#include <mutex>
#include <numbers>
#include <thread>

#include "presence/errors.hpp"
#include "presence/transport.hpp"

namespace presence {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

double action_duration(const BotAction& a) {
  return std::visit(
      [](const auto& x) -> double {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, MoveTo> || std::is_same_v<T, Reach>) {
          return x.over;
        } else if constexpr (std::is_same_v<T, SetMudra>) {
          return 0.0;
        } else {
          return x.seconds;
        }
      },
      a);
}

Vec3 lerp(const Vec3& a, const Vec3& b, double u) { return a + (b - a) * u; }

Vec3 read_vec3(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3) throw SchemaError(path, "expected [x, y, z]");
  Vec3 v;
  double* out[3] = {&v.x, &v.y, &v.z};
  for (std::size_t i = 0; i < 3; ++i) {
    if (!j[i].is_number()) throw SchemaError(path + "[" + std::to_string(i) + "]", "expected a number");
    *out[i] = j[i].get<double>();
    if (!std::isfinite(*out[i])) throw SchemaError(path + "[" + std::to_string(i) + "]", "must be finite");
  }
  return v;
}

double read_positive(const json& a, const char* key, const std::string& path) {
  if (!a.contains(key) || !a[key].is_number()) throw SchemaError(path + "." + key, "missing number");
  const double v = a[key].get<double>();
  if (!(v > 0.0) || !std::isfinite(v)) throw SchemaError(path + "." + key, "duration must be positive");
  return v;
}

Hand read_hand(const json& a, const std::string& path) {
  if (!a.contains("hand") || !a["hand"].is_string()) throw SchemaError(path + ".hand", "missing hand");
  const auto h = a["hand"].get<std::string>();
  if (h == "left") return Hand::left;
  if (h == "right") return Hand::right;
  throw SchemaError(path + ".hand", "must be left or right");
}

void only_keys(const json& a, std::initializer_list<const char*> keys, const std::string& path) {
  for (const auto& [k, _] : a.items()) {
    if (std::find_if(keys.begin(), keys.end(), [&](const char* x) { return k == x; }) == keys.end()) {
      throw SchemaError(path + "." + k, "unknown field");
    }
  }
}

json vec_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

const char* hand_name(Hand h) { return h == Hand::left ? "left" : "right"; }

}  // namespace

double BotScript::duration() const {
  double d = 0.0;
  for (const auto& a : actions) d += action_duration(a);
  return d;
}

BotScript bot_script_from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("$", "script must be an object");
  only_keys(j, {"version", "name", "start", "actions"}, "$");
  if (!j.contains("version") || !j["version"].is_number_integer()) throw SchemaError("$.version", "missing integer version");
  if (j["version"].get<int>() != 1) throw SchemaError("$.version", "unsupported version");
  BotScript s;
  if (!j.contains("name") || !j["name"].is_string() || j["name"].get<std::string>().empty()) {
    throw SchemaError("$.name", "missing name");
  }
  s.name = j["name"].get<std::string>();
  if (j.contains("start")) s.start = read_vec3(j["start"], "$.start");
  if (!j.contains("actions") || !j["actions"].is_array()) throw SchemaError("$.actions", "missing array");

  for (std::size_t i = 0; i < j["actions"].size(); ++i) {
    const auto& a = j["actions"][i];
    const std::string path = "$.actions[" + std::to_string(i) + "]";
    if (!a.is_object()) throw SchemaError(path, "action must be an object");
    if (!a.contains("action") || !a["action"].is_string()) throw SchemaError(path + ".action", "missing action name");
    const auto kind = a["action"].get<std::string>();
    if (kind == "move_to") {
      only_keys(a, {"action", "target", "over"}, path);
      if (!a.contains("target")) throw SchemaError(path + ".target", "missing target");
      s.actions.push_back(MoveTo{read_vec3(a["target"], path + ".target"), read_positive(a, "over", path)});
    } else if (kind == "set_mudra") {
      only_keys(a, {"action", "hand", "state"}, path);
      if (!a.contains("state") || !a["state"].is_string()) throw SchemaError(path + ".state", "missing mudra state");
      const auto m = parse_mudra(a["state"].get<std::string>());
      if (!m) throw SchemaError(path + ".state", "must be none, index or middle");
      s.actions.push_back(SetMudra{read_hand(a, path), *m});
    } else if (kind == "bow" || kind == "raise_arms" || kind == "idle" || kind == "mimic") {
      only_keys(a, {"action", "seconds"}, path);
      const double sec = read_positive(a, "seconds", path);
      if (kind == "bow") s.actions.push_back(Bow{sec});
      if (kind == "raise_arms") s.actions.push_back(RaiseArms{sec});
      if (kind == "idle") s.actions.push_back(Idle{sec});
      if (kind == "mimic") s.actions.push_back(Mimic{sec});
    } else if (kind == "reach") {
      only_keys(a, {"action", "hand", "target", "over"}, path);
      Reach r;
      r.hand = read_hand(a, path);
      if (!a.contains("target")) throw SchemaError(path + ".target", "missing target");
      if (a["target"].is_string()) {
        if (a["target"].get<std::string>() != "nearest_bead") {
          throw SchemaError(path + ".target", "must be [x, y, z] or \"nearest_bead\"");
        }
      } else {
        r.target = read_vec3(a["target"], path + ".target");
      }
      r.over = read_positive(a, "over", path);
      s.actions.push_back(r);
    } else {
      throw SchemaError(path + ".action", "unknown action '" + kind + "'");
    }
  }
  return s;
}

json to_json(const BotScript& s) {
  json actions = json::array();
  for (const auto& a : s.actions) {
    std::visit(
        [&](const auto& x) {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, MoveTo>) {
            actions.push_back({{"action", "move_to"}, {"target", vec_json(x.target)}, {"over", x.over}});
          } else if constexpr (std::is_same_v<T, SetMudra>) {
            actions.push_back({{"action", "set_mudra"}, {"hand", hand_name(x.hand)}, {"state", std::string(to_string(x.state))}});
          } else if constexpr (std::is_same_v<T, Bow>) {
            actions.push_back({{"action", "bow"}, {"seconds", x.seconds}});
          } else if constexpr (std::is_same_v<T, RaiseArms>) {
            actions.push_back({{"action", "raise_arms"}, {"seconds", x.seconds}});
          } else if constexpr (std::is_same_v<T, Idle>) {
            actions.push_back({{"action", "idle"}, {"seconds", x.seconds}});
          } else if constexpr (std::is_same_v<T, Mimic>) {
            actions.push_back({{"action", "mimic"}, {"seconds", x.seconds}});
          } else {
            actions.push_back({{"action", "reach"},
                               {"hand", hand_name(x.hand)},
                               {"target", x.target ? vec_json(*x.target) : json("nearest_bead")},
                               {"over", x.over}});
          }
        },
        a);
  }
  return {{"version", 1}, {"name", s.name}, {"start", vec_json(s.start)}, {"actions", std::move(actions)}};
}

BotScript load_bot_script(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw SchemaError("$", path + " is not valid JSON");
  return bot_script_from_json(j);
}

// --- player ----------------------------------------------------------------

BotPlayer::BotPlayer(BotScript script) : script_(std::move(script)), head_(script_.start) {
  double t = 0.0;
  for (const auto& a : script_.actions) {
    starts_.push_back(t);
    t += action_duration(a);
  }
}

Vec3 BotPlayer::rest_hand(int h, const Vec3& head) const {
  return head + Vec3{h == 0 ? -kBotHandOffsetX : kBotHandOffsetX, -kBotHandDropY, 0.0};
}

void BotPlayer::enter(std::size_t i) {
  if (entered_ == i) return;
  entered_ = i;
  from_head_ = head_;
  if (const auto* r = std::get_if<Reach>(&script_.actions[i])) {
    const int h = static_cast<int>(r->hand);
    reach_from_[h] = anchor_[h] ? *anchor_[h] : rest_hand(h, head_);
    last_reach_target_ = r->target ? *r->target : reach_from_[h];
    reach_bead_.reset();
  }
}

Vec3 BotPlayer::reach_target(const Reach& r, const BotWorldView& world) {
  if (r.target) return *r.target;
  const int h = static_cast<int>(r.hand);
  if (!world.frame || world.frame->sim_positions.empty()) return last_reach_target_;
  const RigidTransform t = radial_transform(world.node_index, std::max(1, world.n_participants));
  const double scale = world.frame->scale;
  if (!reach_bead_) {
    const Vec3 hand_shared = t.apply(reach_from_[h]);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < world.frame->sim_positions.size(); ++b) {
      const double d = (world.frame->sim_positions[b] * scale - hand_shared).squared_norm();
      if (d < best) {
        best = d;
        reach_bead_ = b;
      }
    }
  }
  last_reach_target_ = t.inverse().apply(world.frame->sim_positions[*reach_bead_] * scale);
  return last_reach_target_;
}

void BotPlayer::finish(std::size_t i, const BotWorldView& world) {
  enter(i);
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, MoveTo>) {
          head_ = x.target;
        } else if constexpr (std::is_same_v<T, SetMudra>) {
          mudra_[static_cast<int>(x.hand)] = x.state;
        } else if constexpr (std::is_same_v<T, Reach>) {
          anchor_[static_cast<int>(x.hand)] = reach_target(x, world);
        }
      },
      script_.actions[i]);
}

BotPoseSample BotPlayer::sample(double t, const BotWorldView& world) {
  const std::size_t n = script_.actions.size();
  while (cursor_ < n && t >= starts_[cursor_] + action_duration(script_.actions[cursor_])) {
    finish(cursor_, world);
    ++cursor_;
  }

  Vec3 head = head_;
  Quat head_q = Quat::identity();
  std::array<Vec3, 2> offsets{rest_hand(0, {}), rest_hand(1, {})};
  std::array<std::optional<Vec3>, 2> hand_override = anchor_;

  if (cursor_ < n) {
    enter(cursor_);
    const double dur = action_duration(script_.actions[cursor_]);
    const double u = std::clamp((t - starts_[cursor_]) / dur, 0.0, 1.0);
    const double s = std::sin(std::numbers::pi * u);
    std::visit(
        [&](const auto& x) {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, MoveTo>) {
            head = lerp(from_head_, x.target, u);
          } else if constexpr (std::is_same_v<T, Bow>) {
            head = head_ + Vec3{0.0, -0.25 * s, -0.15 * s};
            head_q = Quat::from_axis_angle({1.0, 0.0, 0.0}, -0.5 * s);
          } else if constexpr (std::is_same_v<T, RaiseArms>) {
            for (auto& o : offsets) {
              o.y = -kBotHandDropY + 1.1 * s * s;
              o.x *= 1.0 + 0.5 * s * s;
            }
          } else if constexpr (std::is_same_v<T, Mimic>) {
            if (!world.frame) return;
            const AvatarState* other = nullptr;
            for (const auto& a : world.frame->avatars) {
              if (a.id != world.self && (!other || a.id < other->id)) other = &a;
            }
            if (!other) return;
            const Quat inv = other->head.orientation.conjugate();
            head.y = other->head.position.y;
            offsets[0] = inv.rotate(other->left.position - other->head.position);
            offsets[1] = inv.rotate(other->right.position - other->head.position);
          } else if constexpr (std::is_same_v<T, Reach>) {
            const int h = static_cast<int>(x.hand);
            hand_override[h] = lerp(reach_from_[h], reach_target(x, world), u);
          }
        },
        script_.actions[cursor_]);
  }

  BotPoseSample out;
  out.head = {head, head_q};
  const Vec3 l = hand_override[0] ? *hand_override[0] : head + offsets[0];
  const Vec3 r = hand_override[1] ? *hand_override[1] : head + offsets[1];
  out.left = {l, Quat::identity()};
  out.right = {r, Quat::identity()};
  out.mudra_left = mudra_[0];
  out.mudra_right = mudra_[1];
  return out;
}

// --- report ----------------------------------------------------------------

json BotReport::to_json() const {
  json trace = json::array();
  for (const auto& s : luminosity_trace) trace.push_back(json::array({s.tick, s.value}));
  json j = {{"name", name},
            {"id", id ? json(*id) : json(nullptr)},
            {"node_index", node_index},
            {"frames_received", frames_received},
            {"frames_with_self", frames_with_self},
            {"poses_sent", poses_sent},
            {"states_observed", states_observed},
            {"luminosity_trace", std::move(trace)},
            {"max_pose_staleness_ms", max_pose_staleness_ms ? json(*max_pose_staleness_ms) : json(nullptr)},
            {"errors", errors},
            {"partial", partial},
            {"rejected", rejected},
            {"saw_finished", saw_finished}};
  if (finished_frame) j["finished_frame"] = message_to_json(*finished_frame);
  if (last_frame) j["last_tick"] = last_frame->tick;
  return j;
}

// --- networked run ---------------------------------------------------------

namespace {

struct SentPose {
  Clock::time_point at;
  Vec3 shared_head;
};

constexpr std::size_t kSentRing = 1024;

}  // namespace

BotReport run_bot(const std::string& host, std::uint16_t port, const BotScript& script, const BotOptions& opt) {
  BotReport rep;
  rep.name = opt.name;
  const auto t0 = Clock::now();
  const auto hard_deadline = t0 + opt.max_duration;

  std::unique_ptr<MessageTransport> link = TcpTransport::connect(host, port, opt.connect_timeout);
  bool join_reported = false;
  auto report_join = [&](bool ok) {
    if (join_reported) return;
    join_reported = true;
    if (opt.on_join) opt.on_join(ok);
  };

  // join handshake; keepalive pings may arrive before the answer
  std::optional<JoinAccept> accept;
  try {
    link->send(JoinRequest{kProtocolVersion, opt.role, opt.name});
    const auto join_deadline = Clock::now() + opt.connect_timeout;
    while (!accept && Clock::now() < join_deadline) {
      auto m = link->receive(std::chrono::milliseconds(50));
      if (!m) continue;
      if (auto* a = std::get_if<JoinAccept>(&*m)) {
        accept = *a;
      } else if (auto* r = std::get_if<JoinReject>(&*m)) {
        rep.rejected = true;
        rep.errors.push_back("join rejected: " + r->reason);
        report_join(false);
        link->close();
        return rep;
      } else if (auto* p = std::get_if<Ping>(&*m)) {
        link->send(Pong{p->nonce});
      }
    }
  } catch (const ConnectivityError& e) {
    report_join(false);
    throw ConnectivityError(std::string("join failed: ") + e.what());
  }
  if (!accept) {
    report_join(false);
    link->close();
    throw ConnectivityError("no answer to join request");
  }
  report_join(true);

  rep.id = accept->participant_id;
  rep.node_index = accept->node_index;
  double tick_rate = 30.0;
  if (accept->session_config.contains("tick_rate") && accept->session_config["tick_rate"].is_number()) {
    tick_rate = accept->session_config["tick_rate"].get<double>();
  }
  if (opt.faults) link = inject(std::move(link), *opt.faults);

  BotWorldView view;
  view.self = accept->participant_id;
  view.node_index = std::max(0, accept->node_index);
  view.n_participants = std::max(1, accept->n_participants);
  const RigidTransform node = radial_transform(view.node_index, view.n_participants);

  BotPlayer player(script);
  std::deque<SentPose> sent;
  std::int64_t seq = 0;
  const auto period = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / tick_rate));
  const bool streams = opt.role != Role::observer;
  const auto start = Clock::now();
  auto next_send = start;

  auto on_frame = [&](const WorldFrame& f) {
    const auto now = Clock::now();
    ++rep.frames_received;
    if (!f.state_name.empty() && (rep.states_observed.empty() || rep.states_observed.back() != f.state_name)) {
      rep.states_observed.push_back(f.state_name);
    }
    if (f.state_name.empty() && !rep.saw_finished) {
      rep.saw_finished = true;
      rep.finished_frame = f;
    }
    rep.luminosity_trace.push_back({f.tick, f.group_luminosity});
    for (const auto& a : f.avatars) {
      if (a.id != view.self) continue;
      ++rep.frames_with_self;
      // the newest pose we sent that matches what the server shows
      for (auto it = sent.rbegin(); it != sent.rend(); ++it) {
        if (it->shared_head == a.head.position) {
          const double ms = std::chrono::duration<double, std::milli>(now - it->at).count();
          rep.max_pose_staleness_ms = std::max(rep.max_pose_staleness_ms.value_or(0.0), ms);
          break;
        }
      }
    }
    rep.last_frame = f;
    view.frame = f;
  };

  try {
    for (const auto& c : opt.commands_after_join) link->send(c);
    for (;;) {
      const auto now = Clock::now();
      const double t = std::chrono::duration<double>(now - start).count();
      const bool script_done = player.done(t);
      if (script_done && (!opt.until_finished || rep.saw_finished) && (!opt.hold_while || !opt.hold_while())) break;
      if (now >= hard_deadline) {
        rep.errors.push_back("run exceeded its time limit");
        rep.partial = !script_done;
        break;
      }

      if (now >= next_send) {
        if (streams) {
          const BotPoseSample s = player.sample(t, view);
          PoseUpdate p{++seq, s.head, s.left, s.right, s.mudra_left, s.mudra_right};
          const auto q = std::get<PoseUpdate>(quantize(Message{p}));
          const Vec3 expected = quantize(to_shared(q.head, node)).position;
          link->send(p);
          ++rep.poses_sent;
          sent.push_back({now, expected});
          if (sent.size() > kSentRing) sent.pop_front();
        }
        next_send += period;
        if (now - next_send > period * 4) next_send = now + period;
      }
      if (opt.command_source) {
        if (auto c = opt.command_source()) link->send(*c);
      }

      const auto wait = std::chrono::duration_cast<std::chrono::milliseconds>(next_send - Clock::now());
      auto m = link->receive(std::clamp(wait, std::chrono::milliseconds(0), std::chrono::milliseconds(50)));
      // drain whatever else is already queued
      while (m) {
        if (const auto* f = std::get_if<WorldFrame>(&*m)) {
          on_frame(*f);
        } else if (const auto* p = std::get_if<Ping>(&*m)) {
          link->send(Pong{p->nonce});
        } else if (const auto* e = std::get_if<ErrorMessage>(&*m)) {
          rep.errors.push_back(e->code + ": " + e->detail);
        }
        m = link->receive(std::chrono::milliseconds(0));
      }
    }
  } catch (const ConnectivityError& e) {
    const double t = std::chrono::duration<double>(Clock::now() - start).count();
    rep.errors.push_back(std::string("disconnected: ") + e.what());
    rep.partial = !player.done(t) || (opt.until_finished && !rep.saw_finished);
  }

  try {
    if (link->is_open()) link->send(Leave{});
  } catch (const ConnectivityError&) {
  }
  link->close();
  return rep;
}

// --- ensemble --------------------------------------------------------------

EnsembleResult run_ensemble(const std::string& host, std::uint16_t port, const std::vector<BotScript>& scripts,
                            const EnsembleOptions& opt) {
  if (scripts.empty()) throw DomainError("ensemble needs at least one script");
  if (opt.bots == 0) throw DomainError("ensemble needs at least one bot");

  const std::size_t n = opt.bots;
  std::vector<BotReport> reports(n);
  std::vector<std::string> failures(n);
  std::atomic<std::size_t> resolved{0};
  std::atomic<std::size_t> running{n};

  std::optional<BotReport> fac_report;
  std::string fac_failure;
  std::thread fac_thread;
  if (opt.facilitator) {
    std::promise<void> fac_joined;
    auto fac_joined_future = fac_joined.get_future();
    fac_thread = std::thread([&, p = std::move(fac_joined)]() mutable {
      BotOptions fo;
      fo.name = "facilitator";
      fo.role = Role::facilitator;
      fo.until_finished = opt.until_finished;
      fo.max_duration = opt.max_duration;
      FacilitatorCommand spectate;
      spectate.kind = FacilitatorCommand::Kind::spectate;
      spectate.spectate = true;
      fo.commands_after_join = {spectate};
      auto resumed = std::make_shared<bool>(false);
      fo.command_source = [&, resumed]() -> std::optional<FacilitatorCommand> {
        if (*resumed || resolved.load() < n) return std::nullopt;
        *resumed = true;
        FacilitatorCommand c;
        c.kind = FacilitatorCommand::Kind::resume;
        return c;
      };
      fo.hold_while = [&] { return running.load() > 0; };
      bool signalled = false;
      fo.on_join = [&](bool) {
        signalled = true;
        p.set_value();
      };
      BotScript idle{"facilitator", {0.0, kBotHeadHeight, 1.5}, {Idle{0.5}}};
      try {
        fac_report = run_bot(host, port, idle, fo);
      } catch (const std::exception& e) {
        fac_failure = e.what();
      }
      if (!signalled) p.set_value();
    });
    // bots join after the facilitator so its spectate lands first
    fac_joined_future.wait();
  }

  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < n; ++i) {
    threads.emplace_back([&, i] {
      BotOptions bo;
      bo.name = scripts[i % scripts.size()].name + "-" + std::to_string(i);
      bo.until_finished = opt.until_finished;
      bo.max_duration = opt.max_duration;
      if (opt.faults) {
        FaultProfile fp = *opt.faults;
        fp.seed += i;
        bo.faults = fp;
      }
      bool counted = false;
      bo.on_join = [&](bool) {
        counted = true;
        ++resolved;
      };
      try {
        reports[i] = run_bot(host, port, scripts[i % scripts.size()], bo);
      } catch (const std::exception& e) {
        reports[i].name = bo.name;
        reports[i].errors.push_back(e.what());
        failures[i] = e.what();
      }
      if (!counted) ++resolved;
      --running;
    });
  }
  for (auto& t : threads) t.join();
  if (fac_thread.joinable()) fac_thread.join();

  std::string what;
  for (std::size_t i = 0; i < n; ++i) {
    if (!failures[i].empty()) {
      what += " " + reports[i].name + " (" + failures[i] + ")";
    } else if (reports[i].partial) {
      what += " " + reports[i].name + " (partial run)";
    }
  }
  if (!fac_failure.empty()) what += " facilitator (" + fac_failure + ")";
  if (!what.empty()) throw EnsembleError("ensemble bots failed:" + what, reports);

  return {std::move(reports), std::move(fac_report)};
}

}  // namespace presence
