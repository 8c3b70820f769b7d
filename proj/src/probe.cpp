// SPDX-License-Identifier: Apache-2.0
#include "presence/probe.hpp"

#include <map>
#include <vector>

#include "presence/errors.hpp"

namespace presence {

using Clock = std::chrono::steady_clock;

NetReport probe(MessageTransport& transport, const ProbeOptions& opt) {
  if (opt.pings < 2) throw DomainError("probe needs at least 2 pings");

  std::map<std::uint64_t, Clock::time_point> outstanding;
  std::vector<double> rtts;
  rtts.reserve(opt.pings);

  auto drain_until = [&](Clock::time_point until) {
    for (;;) {
      const auto now = Clock::now();
      if (now >= until) return;
      auto m = transport.receive(std::chrono::duration_cast<std::chrono::milliseconds>(until - now) +
                                 std::chrono::milliseconds(1));
      if (!m) continue;
      const auto* pong = std::get_if<Pong>(&*m);
      if (!pong) continue;
      auto it = outstanding.find(pong->nonce);
      if (it == outstanding.end()) continue;  // late, duplicate or foreign
      const auto rtt = std::chrono::duration<double, std::milli>(Clock::now() - it->second).count();
      if (rtt <= static_cast<double>(opt.timeout.count())) rtts.push_back(rtt);
      outstanding.erase(it);
    }
  };

  // nonces start high so they never collide with a peer's own pings
  const std::uint64_t base = 0x70726f6265000000ULL;
  auto next_send = Clock::now();
  for (std::size_t i = 0; i < opt.pings; ++i) {
    drain_until(next_send);
    const auto sent_at = Clock::now();
    outstanding[base + i] = sent_at;
    transport.send(Ping{base + i});
    next_send = sent_at + opt.interval;
  }
  // wait for stragglers, bounded by the timeout of the last ping
  const auto deadline = Clock::now() + opt.timeout;
  while (!outstanding.empty() && Clock::now() < deadline) {
    drain_until(std::min(deadline, Clock::now() + std::chrono::milliseconds(20)));
  }
  return summarize_rtts(opt.pings, rtts, opt.thresholds);
}

NetReport probe(const std::string& host, std::uint16_t port, const ProbeOptions& opt) {
  auto t = TcpTransport::connect(host, port);
  NetReport r = probe(*t, opt);
  t->close();
  return r;
}

std::size_t echo_pongs(MessageTransport& transport) {
  std::size_t n = 0;
  try {
    for (;;) {
      auto m = transport.receive(std::chrono::milliseconds(100));
      if (!m) continue;
      if (const auto* p = std::get_if<Ping>(&*m)) {
        transport.send(Pong{p->nonce});
        ++n;
      }
    }
  } catch (const ConnectivityError&) {
  }
  return n;
}

}  // namespace presence
