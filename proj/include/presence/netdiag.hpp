// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include <json.hpp>

namespace presence {

enum class Verdict { good, degraded, unusable };
const char* to_string(Verdict v);

struct NetThresholds {
  double good_loss = 0.01;
  double good_jitter_ms = 30.0;
  double unusable_loss = 0.10;
  double unusable_rtt_ms = 400.0;
};

struct NetReport {
  std::size_t sent = 0;
  std::size_t samples = 0;  // pongs matched in time
  double rtt_mean = 0.0;    // ms
  double rtt_jitter = 0.0;  // ms, sample SD of RTT
  double loss_fraction = 0.0;
  Verdict verdict = Verdict::good;

  nlohmann::json to_json() const;
};

/// Builds a report from matched RTTs (ms) out of `sent` pings.
NetReport summarize_rtts(std::size_t sent, std::span<const double> rtts_ms, const NetThresholds& th = {});

Verdict classify(double loss, double rtt_mean, double jitter, const NetThresholds& th = {});

struct GateResult {
  bool pass = true;
  std::string reason;  // empty for a clean pass
  bool warning = false;
};

/// Fails only for unusable links. The reason names the dominant problem:
/// "packet loss", "high latency" or "jitter".
GateResult stability_gate(const NetReport& r, const NetThresholds& th = {});

struct FaultProfile {
  std::uint64_t seed = 0;
  double base_delay = 0.0;  // ms
  double jitter = 0.0;      // ms, uniform in [-jitter, +jitter]
  double drop_p = 0.0;
  double dup_p = 0.0;

  /// Throws ValidationError.
  void validate() const;
  bool is_noop() const { return base_delay == 0.0 && jitter == 0.0 && drop_p == 0.0 && dup_p == 0.0; }
};

nlohmann::json to_json(const FaultProfile& p);
FaultProfile fault_profile_from_json(const nlohmann::json& j);

struct MessageFate {
  bool drop = false;
  bool duplicate = false;
  double delay_ms = 0.0;  // never negative

  bool operator==(const MessageFate&) const = default;
};

/// Pure function of (profile, seq).
MessageFate fate(const FaultProfile& p, std::uint64_t seq);

}  // namespace presence
