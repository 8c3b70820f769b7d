// SPDX-License-Identifier: Apache-2.0
#include "presence/netdiag.hpp"

#include <algorithm>
#include <cmath>

#include "presence/errors.hpp"
#include "presence/stats.hpp"

namespace presence {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

double unit(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

}  // namespace

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::good: return "good";
    case Verdict::degraded: return "degraded";
    case Verdict::unusable: return "unusable";
  }
  return "?";
}

Verdict classify(double loss, double rtt_mean, double jitter, const NetThresholds& th) {
  if (loss > th.unusable_loss || rtt_mean > th.unusable_rtt_ms) return Verdict::unusable;
  if (loss < th.good_loss && jitter < th.good_jitter_ms) return Verdict::good;
  return Verdict::degraded;
}

NetReport summarize_rtts(std::size_t sent, std::span<const double> rtts_ms, const NetThresholds& th) {
  if (rtts_ms.size() > sent) throw DomainError("more round trips than pings sent");
  NetReport r;
  r.sent = sent;
  r.samples = rtts_ms.size();
  r.loss_fraction = sent == 0 ? 0.0 : static_cast<double>(sent - rtts_ms.size()) / static_cast<double>(sent);
  if (!rtts_ms.empty()) {
    double sum = 0.0;
    for (double v : rtts_ms) sum += v;
    r.rtt_mean = sum / static_cast<double>(rtts_ms.size());
    if (rtts_ms.size() >= 2) r.rtt_jitter = std::sqrt(stats::sample_variance(rtts_ms));
  }
  r.verdict = classify(r.loss_fraction, r.rtt_mean, r.rtt_jitter, th);
  return r;
}

nlohmann::json NetReport::to_json() const {
  return {{"sent", sent},
          {"samples", samples},
          {"rtt_mean", rtt_mean},
          {"rtt_jitter", rtt_jitter},
          {"loss_fraction", loss_fraction},
          {"verdict", to_string(verdict)}};
}

GateResult stability_gate(const NetReport& r, const NetThresholds& th) {
  GateResult g;
  switch (r.verdict) {
    case Verdict::good:
      return g;
    case Verdict::degraded:
      g.warning = true;
      g.reason = r.loss_fraction >= th.good_loss ? "packet loss" : "jitter";
      return g;
    case Verdict::unusable:
      g.pass = false;
      g.reason = r.loss_fraction > th.unusable_loss ? "packet loss" : "high latency";
      return g;
  }
  return g;
}

void FaultProfile::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError(std::string(name) + " must be in [0,1]");
  };
  prob(drop_p, "drop_p");
  prob(dup_p, "dup_p");
  if (!(base_delay >= 0.0) || !std::isfinite(base_delay)) throw ValidationError("base_delay must be >= 0");
  if (!(jitter >= 0.0) || !std::isfinite(jitter)) throw ValidationError("jitter must be >= 0");
}

nlohmann::json to_json(const FaultProfile& p) {
  return {{"seed", p.seed}, {"base_delay", p.base_delay}, {"jitter", p.jitter}, {"drop_p", p.drop_p}, {"dup_p", p.dup_p}};
}

FaultProfile fault_profile_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError("$", "fault profile must be an object");
  FaultProfile p;
  for (const auto& [key, value] : j.items()) {
    const std::string path = "$." + key;
    if (key == "seed") {
      if (!value.is_number_unsigned() && !(value.is_number_integer() && value.get<std::int64_t>() >= 0)) {
        throw SchemaError(path, "must be a non-negative integer");
      }
      p.seed = value.get<std::uint64_t>();
      continue;
    }
    double* field = key == "base_delay" ? &p.base_delay
                    : key == "jitter"   ? &p.jitter
                    : key == "drop_p"   ? &p.drop_p
                    : key == "dup_p"    ? &p.dup_p
                                        : nullptr;
    if (!field) throw SchemaError(path, "unknown field");
    if (!value.is_number()) throw SchemaError(path, "must be a number");
    *field = value.get<double>();
  }
  try {
    p.validate();
  } catch (const ValidationError& e) {
    throw SchemaError("$", e.what());
  }
  return p;
}

MessageFate fate(const FaultProfile& p, std::uint64_t seq) {
  const std::uint64_t key = splitmix64(p.seed ^ splitmix64(seq));
  const double u_drop = unit(splitmix64(key ^ 0x1));
  const double u_dup = unit(splitmix64(key ^ 0x2));
  const double u_jit = unit(splitmix64(key ^ 0x3));
  MessageFate f;
  f.drop = u_drop < p.drop_p;
  f.duplicate = !f.drop && u_dup < p.dup_p;
  f.delay_ms = std::max(0.0, p.base_delay + (2.0 * u_jit - 1.0) * p.jitter);
  return f;
}

}  // namespace presence
