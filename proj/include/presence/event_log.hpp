// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <optional>
#include <string>

#include "presence/session.hpp"

namespace presence {

/// JSON Lines session log. Opening an unwritable path throws
/// std::runtime_error. A write failure is reported once through the error
/// callback (or stderr) and disables the log; the session keeps running.
class JsonlLog : public EventSink {
 public:
  using ErrorCallback = std::function<void(const std::string&)>;

  explicit JsonlLog(const std::string& path, ErrorCallback on_error = {});
  ~JsonlLog() override;
  JsonlLog(const JsonlLog&) = delete;
  JsonlLog& operator=(const JsonlLog&) = delete;

  void write(const SessionEvent& e) override;
  void flush();
  void close();
  bool enabled() const { return enabled_; }
  std::uint64_t lines_written() const { return lines_; }

 private:
  void fail(const std::string& why);

  std::string path_;
  std::ofstream out_;
  ErrorCallback on_error_;
  bool enabled_ = true;
  std::uint64_t lines_ = 0;
};

struct ReplayReport {
  std::uint64_t events = 0;
  std::uint64_t frames = 0;
  std::uint64_t mismatches = 0;
  std::optional<std::uint64_t> first_mismatch_tick;
  std::uint64_t final_tick = 0;
  std::string final_digest;
  std::string final_state;

  bool identical() const { return mismatches == 0; }
  nlohmann::json to_json() const;
};

/// Rebuilds the session from a log's session-start line, re-applies every
/// recorded input in order and compares each frame digest.
/// Throws SchemaError for logs without a session-start header.
ReplayReport replay_log(std::istream& in);

}  // namespace presence
