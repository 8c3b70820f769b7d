// SPDX-License-Identifier: Apache-2.0
#include "presence/transport.hpp"

#include <algorithm>
#include <atomic>

#include <boost/asio/connect.hpp>
#include <boost/asio/io_context.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/read.hpp>
#include <boost/asio/write.hpp>

#include "presence/errors.hpp"

namespace presence {

namespace asio = boost::asio;
using asio::ip::tcp;
using Clock = std::chrono::steady_clock;

void MessageQueue::push(Message m) {
  {
    std::lock_guard lock(mu_);
    if (shut_) return;
    items_.push_back(std::move(m));
  }
  cv_.notify_one();
}

void MessageQueue::shut(std::string reason) {
  {
    std::lock_guard lock(mu_);
    if (shut_) return;
    shut_ = true;
    reason_ = std::move(reason);
  }
  cv_.notify_all();
}

std::optional<Message> MessageQueue::pop(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, timeout, [&] { return !items_.empty() || shut_; });
  if (!items_.empty()) {
    Message m = std::move(items_.front());
    items_.pop_front();
    return m;
  }
  if (shut_) throw ConnectivityError(reason_.empty() ? "connection closed" : reason_);
  return std::nullopt;
}

bool MessageQueue::shut_down() const {
  std::lock_guard lock(mu_);
  return shut_;
}

// --- TCP -------------------------------------------------------------------

struct TcpTransport::Impl {
  asio::io_context io;
  tcp::socket socket{io};
  std::mutex write_mu;
  MessageQueue inbox;
  std::atomic<bool> open{true};
  std::thread reader;

  void read_loop() {
    FrameReader frames;
    std::array<std::uint8_t, 16384> buf{};
    boost::system::error_code ec;
    while (open.load()) {
      const std::size_t n = socket.read_some(asio::buffer(buf), ec);
      if (ec) {
        inbox.shut(ec == asio::error::eof ? "connection closed by peer" : "connection lost: " + ec.message());
        open = false;
        return;
      }
      frames.append(std::span(buf.data(), n));
      for (;;) {
        auto r = frames.next();
        if (r.status == DecodeResult::Status::need_more_data) break;
        if (!r.message) {
          inbox.shut("protocol error from peer: " + r.error);
          open = false;
          socket.close(ec);
          return;
        }
        inbox.push(std::move(*r.message));
      }
    }
  }
};

TcpTransport::TcpTransport(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {
  impl_->reader = std::thread([this] { impl_->read_loop(); });
}

std::unique_ptr<TcpTransport> TcpTransport::connect(const std::string& host, std::uint16_t port,
                                                    std::chrono::milliseconds timeout) {
  auto impl = std::make_unique<Impl>();
  boost::system::error_code ec;
  tcp::resolver resolver(impl->io);
  const auto endpoints = resolver.resolve(host, std::to_string(port), ec);
  if (ec) throw ConnectivityError("cannot resolve " + host + ": " + ec.message());

  // connect with a deadline: run the async connect on this thread's io
  bool done = false;
  asio::async_connect(impl->socket, endpoints, [&](const boost::system::error_code& e, const tcp::endpoint&) {
    ec = e;
    done = true;
  });
  impl->io.run_for(timeout);
  if (!done) {
    impl->socket.close();
    throw ConnectivityError("timed out connecting to " + host + ":" + std::to_string(port));
  }
  if (ec) throw ConnectivityError("cannot connect to " + host + ":" + std::to_string(port) + ": " + ec.message());
  impl->socket.set_option(tcp::no_delay(true), ec);
  impl->io.restart();
  return std::unique_ptr<TcpTransport>(new TcpTransport(std::move(impl)));
}

TcpTransport::~TcpTransport() {
  close();
  if (impl_->reader.joinable()) impl_->reader.join();
}

void TcpTransport::send(const Message& m) {
  const Bytes b = encode(m);
  std::lock_guard lock(impl_->write_mu);
  if (!impl_->open.load()) throw ConnectivityError("transport closed");
  boost::system::error_code ec;
  asio::write(impl_->socket, asio::buffer(b), ec);
  if (ec) {
    impl_->open = false;
    throw ConnectivityError("send failed: " + ec.message());
  }
}

std::optional<Message> TcpTransport::receive(std::chrono::milliseconds timeout) { return impl_->inbox.pop(timeout); }

void TcpTransport::close() {
  std::lock_guard lock(impl_->write_mu);
  impl_->open = false;
  boost::system::error_code ec;
  impl_->socket.shutdown(tcp::socket::shutdown_both, ec);
  impl_->socket.close(ec);
}

bool TcpTransport::is_open() const { return impl_->open.load(); }

// --- loopback --------------------------------------------------------------

namespace {

class LoopbackEnd final : public MessageTransport {
 public:
  LoopbackEnd(std::shared_ptr<MessageQueue> in, std::shared_ptr<MessageQueue> out)
      : in_(std::move(in)), out_(std::move(out)) {}
  ~LoopbackEnd() override { close(); }

  void send(const Message& m) override {
    if (!open_ || out_->shut_down()) throw ConnectivityError("loopback peer closed");
    // round-trip through the codec so both ends see wire values
    out_->push(quantize(m));
  }
  std::optional<Message> receive(std::chrono::milliseconds timeout) override { return in_->pop(timeout); }
  void close() override {
    if (!open_.exchange(false)) return;
    out_->shut("loopback peer closed");
    in_->shut("loopback closed");
  }
  bool is_open() const override { return open_ && !in_->shut_down(); }

 private:
  std::shared_ptr<MessageQueue> in_;
  std::shared_ptr<MessageQueue> out_;
  std::atomic<bool> open_{true};
};

}  // namespace

std::pair<std::unique_ptr<MessageTransport>, std::unique_ptr<MessageTransport>> make_loopback_pair() {
  auto a_to_b = std::make_shared<MessageQueue>();
  auto b_to_a = std::make_shared<MessageQueue>();
  return {std::make_unique<LoopbackEnd>(b_to_a, a_to_b), std::make_unique<LoopbackEnd>(a_to_b, b_to_a)};
}

// --- fault injection -------------------------------------------------------

FaultInjectingTransport::FaultInjectingTransport(std::unique_ptr<MessageTransport> inner, FaultProfile profile)
    : inner_(std::move(inner)), profile_(profile) {
  profile_.validate();
  worker_ = std::thread([this] { deliver_loop(); });
}

FaultInjectingTransport::~FaultInjectingTransport() { close(); }

void FaultInjectingTransport::send(const Message& m) {
  std::unique_lock lock(mu_);
  if (stopping_) throw ConnectivityError("transport closed");
  const MessageFate f = fate(profile_, seq_++);
  if (f.drop) {
    ++dropped_;
    return;
  }
  const auto due = Clock::now() + std::chrono::duration_cast<Clock::duration>(
                                      std::chrono::duration<double, std::milli>(f.delay_ms));
  const int copies = f.duplicate ? 2 : 1;
  if (f.duplicate) ++duplicated_;
  for (int c = 0; c < copies; ++c) {
    Pending p{due, order_++, m};
    auto pos = std::upper_bound(pending_.begin(), pending_.end(), p, [](const Pending& a, const Pending& b) {
      return a.due < b.due || (a.due == b.due && a.order < b.order);
    });
    pending_.insert(pos, std::move(p));
  }
  lock.unlock();
  cv_.notify_one();
}

void FaultInjectingTransport::deliver_loop() {
  std::unique_lock lock(mu_);
  for (;;) {
    if (pending_.empty()) {
      if (stopping_) return;
      cv_.wait(lock, [&] { return stopping_ || !pending_.empty(); });
      continue;
    }
    const auto due = pending_.front().due;
    if (!stopping_ && Clock::now() < due) {
      cv_.wait_until(lock, due);
      continue;
    }
    Pending p = std::move(pending_.front());
    pending_.pop_front();
    lock.unlock();
    try {
      inner_->send(p.message);
    } catch (const ConnectivityError&) {
      // the receive side reports the broken link
    }
    lock.lock();
  }
}

std::optional<Message> FaultInjectingTransport::receive(std::chrono::milliseconds timeout) {
  return inner_->receive(timeout);
}

void FaultInjectingTransport::close() {
  {
    std::lock_guard lock(mu_);
    if (stopping_ && !worker_.joinable()) return;
    stopping_ = true;
  }
  cv_.notify_all();
  if (worker_.joinable()) worker_.join();
  inner_->close();
}

bool FaultInjectingTransport::is_open() const {
  std::lock_guard lock(mu_);
  return !stopping_ && inner_->is_open();
}

std::uint64_t FaultInjectingTransport::sent() const {
  std::lock_guard lock(mu_);
  return seq_;
}

std::uint64_t FaultInjectingTransport::dropped() const {
  std::lock_guard lock(mu_);
  return dropped_;
}

std::uint64_t FaultInjectingTransport::duplicated() const {
  std::lock_guard lock(mu_);
  return duplicated_;
}

std::unique_ptr<MessageTransport> inject(std::unique_ptr<MessageTransport> transport, const FaultProfile& profile) {
  return std::make_unique<FaultInjectingTransport>(std::move(transport), profile);
}

}  // namespace presence
