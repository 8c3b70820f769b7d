// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdint>
#include <string>

#include "presence/netdiag.hpp"
#include "presence/transport.hpp"

namespace presence {

struct ProbeOptions {
  std::size_t pings = 20;
  std::chrono::milliseconds interval{50};
  /// How long a ping may wait for its pong before it counts as lost.
  std::chrono::milliseconds timeout{1000};
  NetThresholds thresholds;
};

/// Sends `pings` Ping messages over an open transport and matches Pongs by
/// nonce. Other traffic on the transport is ignored. Requires pings >= 2.
NetReport probe(MessageTransport& transport, const ProbeOptions& opt = {});

/// Connects to a session server and probes it. Throws ConnectivityError when
/// the endpoint cannot be reached.
NetReport probe(const std::string& host, std::uint16_t port, const ProbeOptions& opt = {});

/// Answers every Ping on `transport` until it closes; returns how many were
/// answered. Handy as the far end of a probe in tests.
std::size_t echo_pongs(MessageTransport& transport);

}  // namespace presence
