// SPDX-License-Identifier: Apache-2.0
#include "presence/server.hpp"

#include <array>
#include <chrono>
#include <deque>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "presence/errors.hpp"
#include "presence/event_log.hpp"
#include "presence/netdiag.hpp"

namespace presence {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using asio::ip::tcp;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

std::string random_token() {
  std::random_device rd;
  std::string out;
  static constexpr char kHex[] = "0123456789abcdef";
  for (int i = 0; i < 16; ++i) {
    const unsigned b = rd() & 0xffu;
    out += kHex[b >> 4];
    out += kHex[b & 0xf];
  }
  return out;
}

// Rolling keepalive statistics for one connection.
struct PingStats {
  static constexpr std::size_t kWindow = 30;
  static constexpr auto kLostAfter = std::chrono::seconds(3);

  std::uint64_t next_nonce = 1;
  std::map<std::uint64_t, Clock::time_point> outstanding;
  std::deque<std::optional<double>> resolved;  // rtt ms, or nullopt when lost

  void push(std::optional<double> v) {
    resolved.push_back(v);
    if (resolved.size() > kWindow) resolved.pop_front();
  }
  void expire(Clock::time_point now) {
    for (auto it = outstanding.begin(); it != outstanding.end();) {
      if (now - it->second > kLostAfter) {
        push(std::nullopt);
        it = outstanding.erase(it);
      } else {
        ++it;
      }
    }
  }
  std::optional<NetReport> report() const {
    if (resolved.empty()) return std::nullopt;
    std::vector<double> rtts;
    for (const auto& r : resolved) {
      if (r) rtts.push_back(*r);
    }
    return summarize_rtts(resolved.size(), rtts);
  }
};

}  // namespace

struct ClientConn;
struct HttpConn;
struct WsConn;

struct SessionServer::Impl : EventSink {
  asio::io_context io;
  SessionConfig config;
  ServerOptions opt;
  Session session;

  tcp::acceptor acceptor{io};
  std::optional<tcp::acceptor> console_acceptor;
  asio::steady_timer tick_timer{io};
  asio::steady_timer ping_timer{io};
  Clock::time_point next_tick;
  std::thread thread;
  bool started = false;
  bool stopping = false;
  std::atomic<bool> is_running{false};

  std::uint64_t next_conn_id = 1;
  std::map<std::uint64_t, std::shared_ptr<ClientConn>> conns;
  std::set<std::shared_ptr<WsConn>> ws_clients;
  std::unique_ptr<JsonlLog> log;

  std::promise<std::uint64_t> finished_promise;
  std::shared_future<std::uint64_t> finished_future{finished_promise.get_future().share()};
  bool finished_set = false;

  Impl(SessionConfig c, ServerOptions o) : config(std::move(c)), opt(std::move(o)), session(config) {
    if (opt.max_client_queue == 0) throw DomainError("max_client_queue must be positive");
  }

  void write(const SessionEvent& e) override;

  void do_accept();
  void do_console_accept();
  void schedule_tick();
  void on_tick();
  void schedule_ping();
  void shutdown_all();
  json view() const;
  json registry_json() const {
    if (config.registry_extension.is_null()) return ParamRegistry::canonical().to_json();
    return ParamRegistry::extended(config.registry_extension).to_json();
  }
};

// --- protocol connections --------------------------------------------------

struct ClientConn : std::enable_shared_from_this<ClientConn> {
  SessionServer::Impl& srv;
  tcp::socket socket;
  std::uint64_t conn_id;
  std::string peer;
  FrameReader reader;
  std::array<std::uint8_t, 16384> buf{};
  std::deque<std::shared_ptr<const Bytes>> outq;
  bool writing = false;
  bool closing = false;
  bool dead = false;
  std::optional<ParticipantId> pid;
  PingStats pings;

  ClientConn(SessionServer::Impl& s, tcp::socket sock, std::uint64_t id)
      : srv(s), socket(std::move(sock)), conn_id(id) {
    boost::system::error_code ec;
    const auto ep = socket.remote_endpoint(ec);
    if (!ec) peer = ep.address().to_string() + ":" + std::to_string(ep.port());
    socket.set_option(tcp::no_delay(true), ec);
  }

  void start() { do_read(); }

  void do_read() {
    socket.async_read_some(asio::buffer(buf), [self = shared_from_this()](boost::system::error_code ec, std::size_t n) {
      if (ec) {
        self->on_closed();
        return;
      }
      self->reader.append(std::span(self->buf.data(), n));
      while (!self->closing) {
        auto r = self->reader.next();
        if (r.status == DecodeResult::Status::need_more_data) break;
        if (r.status == DecodeResult::Status::version_mismatch) {
          self->send_message(JoinReject{"version mismatch: server speaks " + std::to_string(kProtocolVersion)});
          self->close_after_flush();
          break;
        }
        if (!r.message) {
          self->send_message(ErrorMessage{"protocol", r.error});
          self->close_after_flush();
          break;
        }
        self->handle(*r.message);
      }
      if (!self->closing) self->do_read();
    });
  }

  void handle(const Message& m) {
    if (const auto* ping = std::get_if<Ping>(&m)) {
      send_message(Pong{ping->nonce});
      return;
    }
    if (const auto* pong = std::get_if<Pong>(&m)) {
      auto it = pings.outstanding.find(pong->nonce);
      if (it != pings.outstanding.end()) {
        pings.push(std::chrono::duration<double, std::milli>(Clock::now() - it->second).count());
        pings.outstanding.erase(it);
      }
      return;
    }
    if (!pid) {
      const auto* req = std::get_if<JoinRequest>(&m);
      if (!req) {
        send_message(ErrorMessage{"not-joined", "send join_request first"});
        return;
      }
      auto outcome = srv.session.handle_join(*req);
      if (auto* acc = std::get_if<JoinAccept>(&outcome)) {
        pid = acc->participant_id;
        send_message(*acc);
      } else {
        send_message(std::get<JoinReject>(outcome));
        close_after_flush();
      }
      return;
    }
    if (std::holds_alternative<JoinRequest>(m)) {
      send_message(ErrorMessage{"already-joined", "connection already joined"});
      return;
    }
    if (std::holds_alternative<Leave>(m)) {
      leave_session();
      close_after_flush();
      return;
    }
    if (auto reply = srv.session.ingest(*pid, m)) send_message(*reply);
  }

  void leave_session() {
    if (pid) {
      srv.session.leave(*pid);
      pid.reset();
    }
  }

  void send_message(const Message& m) { send(std::make_shared<const Bytes>(encode(m))); }

  void send(std::shared_ptr<const Bytes> bytes) {
    if (closing || dead) return;
    if (outq.size() >= srv.opt.max_client_queue) {
      overflow();
      return;
    }
    outq.push_back(std::move(bytes));
    if (!writing) do_write();
  }

  void overflow() {
    // keep only the frame already on the wire, then say why we hang up
    while (outq.size() > (writing ? 1u : 0u)) outq.pop_back();
    outq.push_back(std::make_shared<const Bytes>(encode(ErrorMessage{"overflow", "client too slow; disconnected"})));
    leave_session();
    close_after_flush();
    if (!writing) do_write();
  }

  void do_write() {
    writing = true;
    asio::async_write(socket, asio::buffer(*outq.front()),
                      [self = shared_from_this()](boost::system::error_code ec, std::size_t) {
                        self->outq.pop_front();
                        if (ec) {
                          self->writing = false;
                          self->on_closed();
                          return;
                        }
                        if (!self->outq.empty()) {
                          self->do_write();
                          return;
                        }
                        self->writing = false;
                        if (self->closing) self->hard_close();
                      });
  }

  void close_after_flush() {
    closing = true;
    if (!writing && outq.empty()) hard_close();
  }

  void hard_close() {
    boost::system::error_code ec;
    socket.shutdown(tcp::socket::shutdown_both, ec);
    socket.close(ec);
    on_closed();
  }

  void on_closed() {
    if (dead) return;
    dead = true;
    leave_session();
    boost::system::error_code ec;
    socket.close(ec);
    srv.conns.erase(conn_id);
  }
};

// --- control endpoint ------------------------------------------------------

struct WsConn : std::enable_shared_from_this<WsConn> {
  static constexpr std::size_t kMaxQueue = 4096;

  SessionServer::Impl& srv;
  websocket::stream<beast::tcp_stream> ws;
  beast::flat_buffer in;
  std::deque<std::string> outq;
  bool open = false;
  bool writing = false;
  bool dead = false;

  WsConn(SessionServer::Impl& s, beast::tcp_stream stream) : srv(s), ws(std::move(stream)) {}

  void accept(http::request<http::string_body> req) {
    beast::get_lowest_layer(ws).expires_never();
    ws.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
      if (ec) return self->drop();
      self->open = true;
      self->do_read();
      if (!self->outq.empty() && !self->writing) self->do_write();
    });
  }

  void do_read() {
    ws.async_read(in, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->drop();
      self->in.consume(self->in.size());  // clients have nothing to say
      self->do_read();
    });
  }

  void push(std::string s) {
    if (dead) return;
    if (outq.size() >= kMaxQueue) {
      beast::error_code ec;
      beast::get_lowest_layer(ws).socket().close(ec);
      drop();
      return;
    }
    outq.push_back(std::move(s));
    if (open && !writing) do_write();
  }

  void do_write() {
    writing = true;
    ws.text(true);
    ws.async_write(asio::buffer(outq.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      self->writing = false;
      if (ec) return self->drop();
      self->outq.pop_front();
      if (!self->outq.empty()) self->do_write();
    });
  }

  void close() {
    if (dead) return;
    beast::error_code ec;
    beast::get_lowest_layer(ws).socket().close(ec);
    drop();
  }

  void drop() {
    if (dead) return;
    dead = true;
    srv.ws_clients.erase(shared_from_this());
  }
};

struct HttpConn : std::enable_shared_from_this<HttpConn> {
  SessionServer::Impl& srv;
  beast::tcp_stream stream;
  beast::flat_buffer buffer;
  http::request<http::string_body> req;

  HttpConn(SessionServer::Impl& s, tcp::socket sock) : srv(s), stream(std::move(sock)) {}

  void do_read() {
    req = {};
    stream.expires_after(std::chrono::seconds(30));
    http::async_read(stream, buffer, req, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        beast::error_code ignored;
        self->stream.socket().shutdown(tcp::socket::shutdown_both, ignored);
        return;
      }
      self->route();
    });
  }

  enum class Access { none, observer, facilitator };

  Access access() const {
    std::string token;
    auto auth = req.find(http::field::authorization);
    if (auth != req.end()) {
      const std::string v(auth->value());
      if (v.rfind("Bearer ", 0) == 0) token = v.substr(7);
    }
    if (token.empty()) token = query("token");
    if (token.empty()) return Access::none;
    if (token == srv.opt.facilitator_token) return Access::facilitator;
    if (!srv.opt.observer_token.empty() && token == srv.opt.observer_token) return Access::observer;
    return Access::none;
  }

  std::string path() const {
    const std::string t(req.target());
    return t.substr(0, t.find('?'));
  }

  std::string query(const std::string& key) const {
    const std::string t(req.target());
    const auto q = t.find('?');
    if (q == std::string::npos) return {};
    std::size_t pos = q + 1;
    while (pos <= t.size()) {
      const auto amp = std::min(t.find('&', pos), t.size());
      const std::string part = t.substr(pos, amp - pos);
      const auto eq = part.find('=');
      if (part.substr(0, eq) == key && eq != std::string::npos) return part.substr(eq + 1);
      pos = amp + 1;
    }
    return {};
  }

  void route() {
    const std::string p = path();
    const Access a = access();

    if (p == "/events" && websocket::is_upgrade(req)) {
      if (a == Access::none) return reply(http::status::unauthorized, {{"error", "unauthorized"}});
      auto ws = std::make_shared<WsConn>(srv, std::move(stream));
      srv.ws_clients.insert(ws);
      ws->accept(std::move(req));
      return;
    }
    if (p == "/session" || p == "/registry") {
      if (req.method() != http::verb::get) return reply(http::status::method_not_allowed, {{"error", "method"}});
      if (a == Access::none) return reply(http::status::unauthorized, {{"error", "unauthorized"}});
      return reply(http::status::ok, p == "/session" ? srv.view() : srv.registry_json());
    }
    if (p == "/command") {
      if (req.method() != http::verb::post) return reply(http::status::method_not_allowed, {{"error", "method"}});
      if (a == Access::none) return reply(http::status::unauthorized, {{"error", "unauthorized"}});
      if (a != Access::facilitator) {
        return reply(http::status::forbidden, {{"error", "permission"}, {"detail", "facilitator token required"}});
      }
      return command();
    }
    if (p == "/events") return reply(http::status::bad_request, {{"error", "websocket upgrade required"}});
    reply(http::status::not_found, {{"error", "not found"}});
  }

  void command() {
    json body = json::parse(req.body(), nullptr, false);
    if (body.is_discarded() || !body.is_object()) {
      return reply(http::status::bad_request, {{"error", "invalid"}, {"detail", "body is not a JSON object"}});
    }
    if (!body.contains("type")) body["type"] = "facilitator_command";
    FacilitatorCommand cmd;
    try {
      auto m = message_from_json(body);
      auto* c = std::get_if<FacilitatorCommand>(&m);
      if (!c) return reply(http::status::bad_request, {{"error", "invalid"}, {"detail", "not a facilitator_command"}});
      cmd = *c;
    } catch (const ProtocolError& e) {
      return reply(http::status::bad_request, {{"error", "invalid"}, {"detail", e.what()}});
    }
    if (auto err = srv.session.console_command(cmd)) {
      return reply(http::status::bad_request, {{"error", err->code}, {"detail", err->detail}});
    }
    reply(http::status::ok, {{"ok", true}, {"tick", srv.session.tick_count()}});
  }

  void reply(http::status status, const json& body) {
    auto res = std::make_shared<http::response<http::string_body>>(status, req.version());
    res->set(http::field::server, "presence");
    res->set(http::field::content_type, "application/json");
    res->keep_alive(req.keep_alive());
    res->body() = body.dump();
    res->prepare_payload();
    http::async_write(stream, *res, [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
      if (ec) return;
      if (!res->keep_alive()) {
        beast::error_code ignored;
        self->stream.socket().shutdown(tcp::socket::shutdown_send, ignored);
        return;
      }
      self->do_read();
    });
  }
};

// --- server ----------------------------------------------------------------

void SessionServer::Impl::write(const SessionEvent& e) {
  if (e.type == "sequence-finished" && !finished_set) {
    finished_set = true;
    finished_promise.set_value(e.tick);
  }
  if (ws_clients.empty()) return;
  const std::string line = e.to_json().dump();
  // copy: a push may drop a client and mutate the set
  const auto clients = std::vector(ws_clients.begin(), ws_clients.end());
  for (const auto& c : clients) c->push(line);
}

void SessionServer::Impl::do_accept() {
  acceptor.async_accept([this](boost::system::error_code ec, tcp::socket sock) {
    if (stopping) return;
    if (!ec) {
      const auto id = next_conn_id++;
      auto c = std::make_shared<ClientConn>(*this, std::move(sock), id);
      conns[id] = c;
      c->start();
    }
    do_accept();
  });
}

void SessionServer::Impl::do_console_accept() {
  console_acceptor->async_accept([this](boost::system::error_code ec, tcp::socket sock) {
    if (stopping) return;
    if (!ec) std::make_shared<HttpConn>(*this, std::move(sock))->do_read();
    do_console_accept();
  });
}

void SessionServer::Impl::schedule_tick() {
  const auto interval = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(config.tick_interval()));
  next_tick += interval;
  const auto now = Clock::now();
  // after a long stall, resynchronize instead of bursting
  if (now - next_tick > std::chrono::seconds(1)) next_tick = now + interval;
  tick_timer.expires_at(next_tick);
  tick_timer.async_wait([this](boost::system::error_code ec) {
    if (ec || stopping) return;
    on_tick();
    schedule_tick();
  });
}

void SessionServer::Impl::on_tick() {
  const WorldFrame f = session.tick();
  const auto bytes = std::make_shared<const Bytes>(encode(f));
  // copy: a send may disconnect a client and mutate the map
  std::vector<std::shared_ptr<ClientConn>> targets;
  for (const auto& [_, c] : conns) {
    if (c->pid) targets.push_back(c);
  }
  for (const auto& c : targets) c->send(bytes);
}

void SessionServer::Impl::schedule_ping() {
  if (opt.ping_interval_s <= 0.0) return;
  ping_timer.expires_after(std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(opt.ping_interval_s)));
  ping_timer.async_wait([this](boost::system::error_code ec) {
    if (ec || stopping) return;
    const auto now = Clock::now();
    std::vector<std::shared_ptr<ClientConn>> targets;
    for (const auto& [_, c] : conns) targets.push_back(c);
    for (const auto& c : targets) {
      c->pings.expire(now);
      const auto nonce = c->pings.next_nonce++;
      c->pings.outstanding[nonce] = now;
      c->send_message(Ping{nonce});
    }
    schedule_ping();
  });
}

void SessionServer::Impl::shutdown_all() {
  stopping = true;
  boost::system::error_code ec;
  tick_timer.cancel();
  ping_timer.cancel();
  acceptor.close(ec);
  if (console_acceptor) console_acceptor->close(ec);
  const auto cs = conns;
  for (const auto& [_, c] : cs) c->hard_close();
  const auto ws = std::vector(ws_clients.begin(), ws_clients.end());
  for (const auto& w : ws) w->close();
}

json SessionServer::Impl::view() const {
  json v = session.summary();
  json net = json::array();
  for (const auto& [id, c] : conns) {
    json row = {{"connection", id}, {"peer", c->peer}};
    row["participant_id"] = c->pid ? json(*c->pid) : json(nullptr);
    if (c->pid) {
      if (const auto* e = session.find(*c->pid)) row["role"] = std::string(to_string(e->role));
    }
    const auto r = c->pings.report();
    row["report"] = r ? r->to_json() : json(nullptr);
    net.push_back(std::move(row));
  }
  v["net"] = std::move(net);
  v["finished"] = session.machine().finished();
  return v;
}

SessionServer::SessionServer(SessionConfig config, ServerOptions options)
    : impl_(std::make_unique<Impl>(std::move(config), std::move(options))) {}

SessionServer::~SessionServer() { stop(); }

void SessionServer::start() {
  Impl& s = *impl_;
  if (s.started) throw StateError("server already started");
  s.started = true;
  if (s.opt.facilitator_token.empty()) s.opt.facilitator_token = random_token();

  if (!s.opt.log_path.empty()) {
    s.log = std::make_unique<JsonlLog>(s.opt.log_path, [](const std::string& why) {
      std::cerr << "session log disabled: " << why << "\n";
    });
  }
  s.session.add_sink(&s);
  if (s.log) s.session.add_sink(s.log.get());

  auto bind = [&](tcp::acceptor& a, std::uint16_t port) {
    boost::system::error_code ec;
    const auto addr = asio::ip::make_address(s.opt.bind_address, ec);
    if (ec) throw std::runtime_error("bad bind address " + s.opt.bind_address);
    const tcp::endpoint ep(addr, port);
    a.open(ep.protocol());
    a.set_option(tcp::acceptor::reuse_address(true));
    a.bind(ep, ec);
    if (ec) throw std::runtime_error("cannot bind " + s.opt.bind_address + ":" + std::to_string(port) + ": " + ec.message());
    a.listen(asio::socket_base::max_listen_connections, ec);
    if (ec) throw std::runtime_error("cannot listen: " + ec.message());
  };
  bind(s.acceptor, s.opt.port);
  if (s.opt.console_port) {
    s.console_acceptor.emplace(s.io);
    bind(*s.console_acceptor, *s.opt.console_port);
  }

  s.do_accept();
  if (s.console_acceptor) s.do_console_accept();
  s.next_tick = Clock::now();
  s.schedule_tick();
  s.schedule_ping();
  s.is_running = true;
  s.thread = std::thread([&s] { s.io.run(); });
}

void SessionServer::stop() {
  Impl& s = *impl_;
  if (!s.is_running.exchange(false)) return;
  asio::post(s.io, [&s] {
    s.shutdown_all();
    // idle keep-alive HTTP connections would otherwise hold run() open
    s.io.stop();
  });
  s.thread.join();
  s.session.remove_sink(&s);
  if (s.log) {
    s.session.remove_sink(s.log.get());
    s.log->close();
  }
}

bool SessionServer::running() const { return impl_->is_running.load(); }

std::uint16_t SessionServer::port() const { return impl_->acceptor.local_endpoint().port(); }

std::optional<std::uint16_t> SessionServer::console_port() const {
  if (!impl_->console_acceptor) return std::nullopt;
  return impl_->console_acceptor->local_endpoint().port();
}

const std::string& SessionServer::facilitator_token() const { return impl_->opt.facilitator_token; }

void SessionServer::with_session(const std::function<void(Session&)>& fn) {
  Impl& s = *impl_;
  if (!s.is_running || s.io.get_executor().running_in_this_thread()) {
    fn(s.session);
    return;
  }
  std::promise<void> done;
  asio::post(s.io, [&] {
    try {
      fn(s.session);
      done.set_value();
    } catch (...) {
      done.set_exception(std::current_exception());
    }
  });
  done.get_future().get();
}

json SessionServer::session_view() {
  Impl& s = *impl_;
  if (!s.is_running || s.io.get_executor().running_in_this_thread()) return s.view();
  std::promise<json> p;
  asio::post(s.io, [&] { p.set_value(s.view()); });
  return p.get_future().get();
}

std::shared_future<std::uint64_t> SessionServer::finished() const { return impl_->finished_future; }

}  // namespace presence
