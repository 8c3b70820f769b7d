// SPDX-License-Identifier: Apache-2.0
#include "presence/states.hpp"

#include <cmath>
#include <set>

#include "presence/errors.hpp"

namespace presence {

using nlohmann::json;

namespace {

ParamSpec scalar(std::string key, double lo, double hi, double def) {
  ParamSpec s;
  s.key = std::move(key);
  s.kind = ParamSpec::Kind::scalar;
  s.min = lo;
  s.max = hi;
  s.default_value = def;
  return s;
}

ParamSpec enumeration(std::string key, std::vector<std::string> values, std::string def) {
  ParamSpec s;
  s.key = std::move(key);
  s.kind = ParamSpec::Kind::enumeration;
  s.values = std::move(values);
  s.default_value = std::move(def);
  return s;
}

ParamRegistry build_canonical() {
  ParamRegistry r;
  r.add(scalar("body.color_hue", 0, 360, 200));
  r.add(scalar("body.color_saturation", 0, 1, 0.6));
  r.add(scalar("body.density", 0, 1, 0.5));
  r.add(enumeration("body.distribution", {"gaussian", "shell", "uniform"}, "gaussian"));
  r.add(scalar("body.latency", 0, 2, 0.2));
  r.add(scalar("body.size", 0.1, 2, 1.0));
  r.add(scalar("body.opacity", 0, 1, 0.8));
  r.add(scalar("heart.light_size", 0, 1, 0.3));
  r.add(scalar("heart.light_intensity", 0, 1, 0.5));
  r.add(scalar("heart.color_hue", 0, 360, 40));
  r.add(enumeration("thread.render_mode", {"hidden", "beads", "ribbon", "glow"}, "glow"));
  r.add(scalar("thread.color_hue", 0, 360, 180));
  r.add(scalar("thread.glow", 0, 1, 0.5));
  r.add(scalar("hand.light_intensity", 0, 1, 0.7));
  r.add(scalar("hand.trail_length", 0, 5, 1.0));
  r.add(scalar("global.light_level", 0, 1, 0.6));
  r.add(scalar("global.fog_density", 0, 1, 0.1));
  r.add(scalar("global.background_hue", 0, 360, 240));
  r.add(scalar("global.particle_speed", 0, 5, 1.0));
  r.add(scalar("coalescence.glow_gain", 0, 5, 1.0));
  return r;
}

bool is_number(const json& j) { return j.is_number() && !j.is_boolean(); }

ParamSpec spec_from_json(const json& p, const std::string& path) {
  if (!p.is_object()) throw SchemaError(path, "parameter definition must be an object");
  if (!p.contains("key") || !p["key"].is_string()) throw SchemaError(path + ".key", "missing string");
  const auto type = p.value("type", std::string("scalar"));
  ParamSpec s;
  s.key = p["key"].get<std::string>();
  if (type == "scalar") {
    if (!p.contains("min") || !p.contains("max") || !is_number(p["min"]) || !is_number(p["max"])) {
      throw SchemaError(path, "scalar parameter needs numeric min and max");
    }
    s.kind = ParamSpec::Kind::scalar;
    s.min = p["min"].get<double>();
    s.max = p["max"].get<double>();
    if (!(s.min <= s.max)) throw SchemaError(path, "min exceeds max");
    s.default_value = p.contains("default") ? p["default"].get<double>() : s.min;
  } else if (type == "enum") {
    if (!p.contains("values") || !p["values"].is_array() || p["values"].empty()) {
      throw SchemaError(path + ".values", "enum parameter needs a non-empty values array");
    }
    s.kind = ParamSpec::Kind::enumeration;
    s.values = p["values"].get<std::vector<std::string>>();
    s.default_value = p.contains("default") ? p["default"].get<std::string>() : s.values.front();
  } else {
    throw SchemaError(path + ".type", "unknown parameter type '" + type + "'");
  }
  if (auto why = s.check(s.default_value)) throw SchemaError(path + ".default", *why);
  return s;
}

}  // namespace

std::optional<std::string> ParamSpec::check(const ParamValue& v) const {
  if (kind == Kind::scalar) {
    const auto* d = std::get_if<double>(&v);
    if (!d) return "expected a number";
    if (!std::isfinite(*d) || *d < min || *d > max) {
      return "value out of range [" + json(min).dump() + ", " + json(max).dump() + "]";
    }
    return std::nullopt;
  }
  const auto* str = std::get_if<std::string>(&v);
  if (!str) return "expected one of the enum strings";
  for (const auto& allowed : values) {
    if (allowed == *str) return std::nullopt;
  }
  return "value '" + *str + "' not in enum";
}

const ParamRegistry& ParamRegistry::canonical() { return *canonical_shared(); }

std::shared_ptr<const ParamRegistry> ParamRegistry::canonical_shared() {
  static const auto instance = std::make_shared<const ParamRegistry>(build_canonical());
  return instance;
}

ParamRegistry ParamRegistry::from_json(const json& doc) {
  ParamRegistry r;
  if (!doc.is_object()) throw SchemaError("$", "registry must be an object");
  if (doc.value("version", 0) != kSequenceVersion) throw VersionError(kSequenceVersion, doc.value("version", 0));
  if (!doc.contains("params") || !doc["params"].is_array()) throw SchemaError("$.params", "missing array");
  for (std::size_t i = 0; i < doc["params"].size(); ++i) {
    r.add(spec_from_json(doc["params"][i], "$.params[" + std::to_string(i) + "]"));
  }
  return r;
}

ParamRegistry ParamRegistry::extended(const json& doc) {
  ParamRegistry r = canonical();
  for (auto& [key, spec] : from_json(doc).specs_) r.add(spec);
  return r;
}

void ParamRegistry::add(ParamSpec spec) {
  auto key = spec.key;
  specs_.insert_or_assign(std::move(key), std::move(spec));
}

const ParamSpec* ParamRegistry::find(std::string_view key) const {
  auto it = specs_.find(key);
  return it == specs_.end() ? nullptr : &it->second;
}

ParamMap ParamRegistry::defaults() const {
  ParamMap out;
  for (const auto& [k, s] : specs_) out.emplace(k, s.default_value);
  return out;
}

json ParamRegistry::to_json() const {
  json params = json::array();
  for (const auto& [k, s] : specs_) {
    json p{{"key", k}, {"default", param_value_to_json(s.default_value)}};
    if (s.kind == ParamSpec::Kind::scalar) {
      p["type"] = "scalar";
      p["min"] = s.min;
      p["max"] = s.max;
    } else {
      p["type"] = "enum";
      p["values"] = s.values;
    }
    params.push_back(std::move(p));
  }
  return {{"version", kSequenceVersion}, {"params", std::move(params)}};
}

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::preparation: return "preparation";
    case Phase::journey: return "journey";
    case Phase::integration: return "integration";
  }
  return "journey";
}

std::optional<Phase> parse_phase(std::string_view s) {
  if (s == "preparation") return Phase::preparation;
  if (s == "journey") return Phase::journey;
  if (s == "integration") return Phase::integration;
  return std::nullopt;
}

double StateSequence::total_duration() const {
  double t = 0.0;
  for (const auto& s : states) t += s.duration;
  return t;
}

json param_value_to_json(const ParamValue& v) {
  return std::visit([](const auto& x) { return json(x); }, v);
}

ParamValue param_value_from_json(const json& j) {
  if (is_number(j)) return j.get<double>();
  if (j.is_string()) return j.get<std::string>();
  throw SchemaError("$", "parameter value must be a number or string");
}

StateSequence sequence_from_json(const json& doc, const ParamRegistry& registry) {
  if (!doc.is_object()) throw SchemaError("$", "document must be an object");
  for (const auto& [k, _] : doc.items()) {
    if (k != "version" && k != "phase" && k != "states") throw SchemaError("$." + k, "unknown field");
  }
  if (!doc.contains("version") || !doc["version"].is_number_integer()) {
    throw SchemaError("$.version", "missing integer version");
  }
  StateSequence seq;
  seq.version = doc["version"].get<int>();
  if (seq.version != kSequenceVersion) throw VersionError(kSequenceVersion, seq.version);

  if (!doc.contains("phase") || !doc["phase"].is_string()) throw SchemaError("$.phase", "missing phase");
  auto phase = parse_phase(doc["phase"].get<std::string>());
  if (!phase) throw SchemaError("$.phase", "must be preparation, journey or integration");
  seq.phase = *phase;

  if (!doc.contains("states") || !doc["states"].is_array()) throw SchemaError("$.states", "missing array");
  const auto& states = doc["states"];
  if (states.empty()) throw SchemaError("$.states", "sequence must contain at least one state");

  std::set<std::string> names;
  for (std::size_t i = 0; i < states.size(); ++i) {
    const std::string path = "$.states[" + std::to_string(i) + "]";
    const auto& s = states[i];
    if (!s.is_object()) throw SchemaError(path, "state must be an object");
    for (const auto& [k, _] : s.items()) {
      if (k != "name" && k != "duration" && k != "crossfade" && k != "params") {
        throw SchemaError(path + "." + k, "unknown field");
      }
    }
    AestheticState st;
    if (!s.contains("name") || !s["name"].is_string() || s["name"].get<std::string>().empty()) {
      throw SchemaError(path + ".name", "missing state name");
    }
    st.name = s["name"].get<std::string>();
    const std::string named = path + " (" + st.name + ")";
    if (!names.insert(st.name).second) throw SchemaError(named + ".name", "duplicate state name");

    if (!s.contains("duration") || !is_number(s["duration"])) throw SchemaError(named + ".duration", "missing number");
    st.duration = s["duration"].get<double>();
    if (!(st.duration > 0.0) || !std::isfinite(st.duration)) {
      throw SchemaError(named + ".duration", "duration must be positive");
    }
    if (s.contains("crossfade")) {
      if (!is_number(s["crossfade"])) throw SchemaError(named + ".crossfade", "must be a number");
      st.crossfade = s["crossfade"].get<double>();
      if (!(st.crossfade >= 0.0) || !(st.crossfade < st.duration)) {
        throw SchemaError(named + ".crossfade", "crossfade must be in [0, duration)");
      }
    }
    if (s.contains("params")) {
      if (!s["params"].is_object()) throw SchemaError(named + ".params", "must be an object");
      for (const auto& [key, value] : s["params"].items()) {
        const std::string ppath = named + ".params." + key;
        const ParamSpec* spec = registry.find(key);
        if (!spec) throw SchemaError(ppath, "unregistered parameter");
        if (!is_number(value) && !value.is_string()) throw SchemaError(ppath, "must be a number or string");
        ParamValue v = param_value_from_json(value);
        if (auto why = spec->check(v)) throw SchemaError(ppath, *why);
        st.params.emplace(key, std::move(v));
      }
    }
    seq.states.push_back(std::move(st));
  }
  return seq;
}

StateSequence parse_sequence(std::string_view document, const ParamRegistry& registry) {
  json doc = json::parse(document.begin(), document.end(), nullptr, false);
  if (doc.is_discarded()) throw SchemaError("$", "malformed JSON");
  return sequence_from_json(doc, registry);
}

json to_json(const StateSequence& seq) {
  json states = json::array();
  for (const auto& s : seq.states) {
    json params = json::object();
    for (const auto& [k, v] : s.params) params[k] = param_value_to_json(v);
    states.push_back({{"name", s.name}, {"duration", s.duration}, {"crossfade", s.crossfade}, {"params", params}});
  }
  return {{"version", seq.version}, {"phase", std::string(to_string(seq.phase))}, {"states", std::move(states)}};
}

std::string serialize_sequence(const StateSequence& seq) { return to_json(seq).dump(); }

StateSequence concat_sequences(const std::vector<StateSequence>& parts) {
  if (parts.empty()) throw DomainError("no sequences to join");
  StateSequence out;
  out.version = parts.front().version;
  out.phase = parts.front().phase;
  std::set<std::string> names;
  for (const auto& p : parts) {
    for (const auto& s : p.states) {
      if (!names.insert(s.name).second) throw SchemaError(s.name, "duplicate state name across sequences");
      out.states.push_back(s);
    }
  }
  return out;
}

StateMachine::StateMachine(StateSequence sequence, std::shared_ptr<const ParamRegistry> registry)
    : sequence_(std::move(sequence)), registry_(std::move(registry)) {
  if (sequence_.states.empty()) throw DomainError("state machine needs a non-empty sequence");
  if (!registry_) throw DomainError("state machine needs a registry");
}

std::vector<MachineEvent> StateMachine::advance_to_next() {
  std::vector<MachineEvent> events;
  elapsed_ = 0.0;
  if (index_ + 1 < sequence_.states.size()) {
    ++index_;
    events.push_back({MachineEvent::Kind::state_entered, index_, sequence_.states[index_].name, clock_});
  } else {
    mode_ = Mode::finished;
    events.push_back({MachineEvent::Kind::finished, index_, sequence_.states[index_].name, clock_});
  }
  return events;
}

std::vector<MachineEvent> StateMachine::tick(double dt) {
  if (!(dt >= 0.0)) throw DomainError("tick dt must be non-negative");
  std::vector<MachineEvent> events;
  double remaining = dt;
  while (mode_ == Mode::running) {
    const double left = sequence_.states[index_].duration - elapsed_;
    if (remaining < left) {
      elapsed_ += remaining;
      clock_ += remaining;
      break;
    }
    remaining -= left;
    clock_ += left;
    auto e = advance_to_next();
    events.insert(events.end(), e.begin(), e.end());
  }
  return events;
}

std::vector<MachineEvent> StateMachine::apply(const MachineCommand& c) {
  switch (c.kind) {
    case MachineCommand::Kind::hold:
      if (mode_ == Mode::running) mode_ = Mode::held;
      return {};
    case MachineCommand::Kind::resume:
      if (mode_ == Mode::held) mode_ = Mode::running;
      return {};
    case MachineCommand::Kind::skip: {
      if (mode_ == Mode::finished) throw StateError("cannot skip: sequence finished");
      const Mode was = mode_;
      auto events = advance_to_next();
      if (mode_ != Mode::finished) mode_ = was;
      return events;
    }
    case MachineCommand::Kind::set_override: {
      const ParamSpec* spec = registry_->find(c.key);
      if (!spec) throw ValidationError("unregistered parameter '" + c.key + "'");
      if (auto why = spec->check(c.value)) throw ValidationError(c.key + ": " + *why);
      overrides_.insert_or_assign(c.key, c.value);
      return {};
    }
    case MachineCommand::Kind::clear_override:
      if (!registry_->find(c.key)) throw ValidationError("unregistered parameter '" + c.key + "'");
      overrides_.erase(c.key);
      return {};
  }
  return {};
}

ParamMap StateMachine::effective_params() const {
  if (mode_ == Mode::finished) throw StateError("sequence finished; no current state");
  ParamMap out = registry_->defaults();
  const auto& cur = sequence_.states[index_];
  for (const auto& [k, v] : cur.params) out.insert_or_assign(k, v);

  if (index_ > 0 && cur.crossfade > 0.0 && elapsed_ < cur.crossfade) {
    const double w = elapsed_ / cur.crossfade;
    ParamMap prev = registry_->defaults();
    for (const auto& [k, v] : sequence_.states[index_ - 1].params) prev.insert_or_assign(k, v);
    for (auto& [k, v] : out) {
      auto* to = std::get_if<double>(&v);
      auto it = prev.find(k);
      if (!to || it == prev.end()) continue;
      if (const auto* from = std::get_if<double>(&it->second)) v = *from + (*to - *from) * w;
    }
  }
  for (const auto& [k, v] : overrides_) out.insert_or_assign(k, v);
  return out;
}

std::string_view to_string(StateMachine::Mode m) {
  switch (m) {
    case StateMachine::Mode::running: return "running";
    case StateMachine::Mode::held: return "held";
    case StateMachine::Mode::finished: return "finished";
  }
  return "running";
}

}  // namespace presence
