// SPDX-License-Identifier: Apache-2.0
//
// Message-level transports: framed TCP, an in-process loopback pair, and a
// wrapper that injects deterministic faults on the send direction.
#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>

#include "presence/netdiag.hpp"
#include "presence/protocol.hpp"

namespace presence {

class MessageTransport {
 public:
  virtual ~MessageTransport() = default;
  /// Throws ConnectivityError once the transport is closed.
  virtual void send(const Message& m) = 0;
  /// Next message, or nullopt on timeout. Throws ConnectivityError when the
  /// peer has gone away and nothing is left to read.
  virtual std::optional<Message> receive(std::chrono::milliseconds timeout) = 0;
  virtual void close() = 0;
  virtual bool is_open() const = 0;
};

/// Thread-safe FIFO shared by the concrete transports.
class MessageQueue {
 public:
  void push(Message m);
  /// Marks the producer side finished; waiting readers wake up.
  void shut(std::string reason);
  std::optional<Message> pop(std::chrono::milliseconds timeout);
  bool shut_down() const;

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Message> items_;
  bool shut_ = false;
  std::string reason_;
};

class TcpTransport final : public MessageTransport {
 public:
  /// Throws ConnectivityError when the endpoint is unreachable.
  static std::unique_ptr<TcpTransport> connect(const std::string& host, std::uint16_t port,
                                               std::chrono::milliseconds timeout = std::chrono::seconds(5));
  ~TcpTransport() override;

  void send(const Message& m) override;
  std::optional<Message> receive(std::chrono::milliseconds timeout) override;
  void close() override;
  bool is_open() const override;

 private:
  struct Impl;
  explicit TcpTransport(std::unique_ptr<Impl> impl);
  std::unique_ptr<Impl> impl_;
};

/// Two connected in-process endpoints.
std::pair<std::unique_ptr<MessageTransport>, std::unique_ptr<MessageTransport>> make_loopback_pair();

/// Applies FaultProfile fates to outgoing messages. Message n (0-based,
/// counted on this wrapper) is dropped, duplicated or delayed according to
/// fate(profile, n) alone; delayed messages are released by a delivery
/// thread in due-time order. Receiving is untouched.
class FaultInjectingTransport final : public MessageTransport {
 public:
  FaultInjectingTransport(std::unique_ptr<MessageTransport> inner, FaultProfile profile);
  ~FaultInjectingTransport() override;

  void send(const Message& m) override;
  std::optional<Message> receive(std::chrono::milliseconds timeout) override;
  /// Releases everything still pending, then closes the inner transport.
  void close() override;
  bool is_open() const override;

  std::uint64_t sent() const;
  std::uint64_t dropped() const;
  std::uint64_t duplicated() const;

 private:
  struct Pending {
    std::chrono::steady_clock::time_point due;
    std::uint64_t order;
    Message message;
  };
  void deliver_loop();

  std::unique_ptr<MessageTransport> inner_;
  FaultProfile profile_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Pending> pending_;  // kept sorted by (due, order)
  std::uint64_t seq_ = 0;
  std::uint64_t order_ = 0;
  std::uint64_t dropped_ = 0;
  std::uint64_t duplicated_ = 0;
  bool stopping_ = false;
  std::thread worker_;
};

std::unique_ptr<MessageTransport> inject(std::unique_ptr<MessageTransport> transport, const FaultProfile& profile);

}  // namespace presence
