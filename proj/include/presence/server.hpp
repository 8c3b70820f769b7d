// SPDX-License-Identifier: Apache-2.0
//
// Network front end for one Session. A single I/O thread owns the session:
// connection reads, the tick timer and the control endpoint all run there,
// so every mutation is serialized in arrival order.
//
// Control endpoint (HTTP on the console port):
//   GET  /session   roster, state and per-connection network summary
//   GET  /registry  parameter registry for building override controls
//   POST /command   FacilitatorCommand JSON; facilitator token only
//   WS   /events    SessionEvent stream
// Tokens travel as "Authorization: Bearer <token>" or "?token=<token>".
#pragma once

#include <cstdint>
#include <functional>
#include <future>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "presence/session.hpp"

namespace presence {

struct ServerOptions {
  std::string bind_address = "127.0.0.1";
  std::uint16_t port = kDefaultPort;  // 0 picks an ephemeral port
  std::optional<std::uint16_t> console_port;  // control endpoint; 0 = ephemeral
  std::string log_path;               // empty: no JSONL log
  std::string facilitator_token;      // empty: generated at start()
  std::string observer_token;         // empty: no read-only token
  /// Frames queued for a slow client before it is disconnected.
  std::size_t max_client_queue = 256;
  /// Server-initiated keepalive pings per connection, for the net summary.
  double ping_interval_s = 1.0;
};

class SessionServer {
 public:
  SessionServer(SessionConfig config, ServerOptions options);
  ~SessionServer();
  SessionServer(const SessionServer&) = delete;
  SessionServer& operator=(const SessionServer&) = delete;

  /// Binds the listeners, opens the log and starts ticking. Throws
  /// std::runtime_error when a port cannot be bound or the log opened.
  void start();
  /// Stops ticking, disconnects everyone and flushes the log. Idempotent.
  void stop();
  bool running() const;

  std::uint16_t port() const;
  std::optional<std::uint16_t> console_port() const;
  const std::string& facilitator_token() const;

  /// Runs `fn` on the session thread and waits for it.
  void with_session(const std::function<void(Session&)>& fn);
  /// GET /session payload.
  nlohmann::json session_view();
  /// Resolves when the state machine first reports finished.
  std::shared_future<std::uint64_t> finished() const;

  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

}  // namespace presence
