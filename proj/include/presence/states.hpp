// SPDX-License-Identifier: Apache-2.0
//
// The experience script: timed aesthetic states, their JSON form, and the
// runtime machine the facilitator steers.
#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

namespace presence {

inline constexpr int kSequenceVersion = 1;

/// Scalar or enum hyperparameter value.
using ParamValue = std::variant<double, std::string>;
using ParamMap = std::map<std::string, ParamValue>;

struct ParamSpec {
  enum class Kind { scalar, enumeration };
  std::string key;
  Kind kind = Kind::scalar;
  double min = 0.0;
  double max = 1.0;
  std::vector<std::string> values;  // enum choices
  ParamValue default_value = 0.0;

  /// Empty when `v` is acceptable, otherwise a reason.
  std::optional<std::string> check(const ParamValue& v) const;
};

/// Set of hyperparameter keys a state may assign.
class ParamRegistry {
 public:
  /// The shipped canonical keys (body, heart, thread, hand, global families).
  static const ParamRegistry& canonical();
  static std::shared_ptr<const ParamRegistry> canonical_shared();
  /// Registry document: {"version":1,"params":[{key,type,min,max|values,default}]}.
  static ParamRegistry from_json(const nlohmann::json& doc);
  /// Canonical keys plus those in `doc`; later definitions replace earlier ones.
  static ParamRegistry extended(const nlohmann::json& doc);

  void add(ParamSpec spec);
  const ParamSpec* find(std::string_view key) const;
  const std::map<std::string, ParamSpec, std::less<>>& specs() const { return specs_; }
  ParamMap defaults() const;
  nlohmann::json to_json() const;

 private:
  std::map<std::string, ParamSpec, std::less<>> specs_;
};

struct AestheticState {
  std::string name;
  double duration = 0.0;
  double crossfade = 0.0;
  ParamMap params;
  bool operator==(const AestheticState&) const = default;
};

enum class Phase { preparation, journey, integration };
std::string_view to_string(Phase p);
std::optional<Phase> parse_phase(std::string_view s);

struct StateSequence {
  int version = kSequenceVersion;
  Phase phase = Phase::journey;
  std::vector<AestheticState> states;

  double total_duration() const;
  bool operator==(const StateSequence&) const = default;
};

/// Parses and validates a sequence document. Throws SchemaError with a
/// JSON path, or VersionError.
StateSequence parse_sequence(std::string_view document,
                             const ParamRegistry& registry = ParamRegistry::canonical());
StateSequence sequence_from_json(const nlohmann::json& doc,
                                 const ParamRegistry& registry = ParamRegistry::canonical());

nlohmann::json to_json(const StateSequence& seq);
/// UTF-8, sorted keys, no insignificant whitespace.
std::string serialize_sequence(const StateSequence& seq);

/// Joins phases into one script; state names must stay unique.
StateSequence concat_sequences(const std::vector<StateSequence>& parts);

nlohmann::json param_value_to_json(const ParamValue& v);
ParamValue param_value_from_json(const nlohmann::json& j);

struct MachineEvent {
  enum class Kind { state_entered, finished };
  Kind kind = Kind::state_entered;
  std::size_t index = 0;
  std::string name;
  double at = 0.0;  // machine clock at the boundary
  bool operator==(const MachineEvent&) const = default;
};

struct MachineCommand {
  enum class Kind { hold, resume, skip, set_override, clear_override };
  Kind kind = Kind::hold;
  std::string key;
  ParamValue value = 0.0;

  static MachineCommand hold() { return {Kind::hold, {}, 0.0}; }
  static MachineCommand resume() { return {Kind::resume, {}, 0.0}; }
  static MachineCommand skip() { return {Kind::skip, {}, 0.0}; }
  static MachineCommand set_override(std::string key, ParamValue v) {
    return {Kind::set_override, std::move(key), std::move(v)};
  }
  static MachineCommand clear_override(std::string key) { return {Kind::clear_override, std::move(key), 0.0}; }
};

class StateMachine {
 public:
  enum class Mode { running, held, finished };

  explicit StateMachine(StateSequence sequence,
                        std::shared_ptr<const ParamRegistry> registry = ParamRegistry::canonical_shared());

  /// Advances time unless held. Emits one event per boundary crossed.
  std::vector<MachineEvent> tick(double dt);
  /// Applies a facilitator command. skip on a finished machine throws
  /// StateError; overrides for unregistered keys or bad values throw
  /// ValidationError.
  std::vector<MachineEvent> apply(const MachineCommand& c);
  /// Current values: registry defaults, then the state (crossfaded from the
  /// previous state during its window), then overrides.
  ParamMap effective_params() const;

  const StateSequence& sequence() const { return sequence_; }
  const AestheticState& current() const { return sequence_.states[index_]; }
  std::size_t index() const { return index_; }
  double elapsed() const { return elapsed_; }
  double clock() const { return clock_; }
  Mode mode() const { return mode_; }
  bool finished() const { return mode_ == Mode::finished; }
  const ParamMap& overrides() const { return overrides_; }
  const ParamRegistry& registry() const { return *registry_; }

 private:
  std::vector<MachineEvent> advance_to_next();

  StateSequence sequence_;
  std::shared_ptr<const ParamRegistry> registry_;
  std::size_t index_ = 0;
  double elapsed_ = 0.0;
  double clock_ = 0.0;
  Mode mode_ = Mode::running;
  Mode resume_mode_ = Mode::running;
  ParamMap overrides_;
};

std::string_view to_string(StateMachine::Mode m);

}  // namespace presence
