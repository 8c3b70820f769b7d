// SPDX-License-Identifier: Apache-2.0
// Drives the presence executable as a subprocess.
#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "net_helpers.hpp"
#include "presence/csv.hpp"
#include "presence/psychometrics.hpp"

using namespace presence;
namespace fs = std::filesystem;

namespace {

struct Run {
  int rc = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(PRESENCE_CLI_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.rc = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path scratch() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / ("presence_cli_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string write_file(const std::string& name, const std::string& body) {
  const auto p = scratch() / name;
  std::ofstream(p) << body;
  return p.string();
}

// Last line of output that parses as a JSON object.
nlohmann::json last_json(const std::string& out) {
  std::istringstream in(out);
  std::string line;
  nlohmann::json found;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (!j.is_discarded() && j.is_object()) found = j;
  }
  return found;
}

std::string data(const std::string& rel) { return nettest::data_path(rel); }

}  // namespace

TEST_CASE("help and argument errors") {
  for (const char* sub : {"", "serve", "bot", "ensemble", "diag", "score", "compare", "replay"}) {
    INFO(sub);
    CHECK(run(std::string(sub) + " --help").rc == 0);
  }
  CHECK(run("--version").rc == 0);
  CHECK(run("").rc == 1);
  CHECK(run("launch").rc == 1);
  CHECK(run("diag --bogus").rc == 1);
  CHECK(run("bot").rc == 1);  // --script is required
  CHECK(run("diag --server 127.0.0.1:notaport").rc == 1);
  CHECK(run("score sf36 --input x.csv").rc == 1);
}

TEST_CASE("missing files and schema errors exit 2 with a pointer") {
  auto r = run("replay --log /nonexistent/session.jsonl");
  CHECK(r.rc == 2);
  CHECK(r.out.find("/nonexistent/session.jsonl") != std::string::npos);

  r = run("bot --script /nonexistent/bot.json");
  CHECK(r.rc == 2);
  CHECK(r.out.find("/nonexistent/bot.json") != std::string::npos);

  const auto bad_script = write_file("bad_script.json", R"({"version":1,"name":"x","actions":[{"action":"idle","seconds":-1}]})");
  r = run("bot --script " + bad_script);
  CHECK(r.rc == 2);
  CHECK(r.out.find("$.actions[0].seconds") != std::string::npos);

  const auto bad_config = write_file("bad_config.json", R"({"max_participants":5,"warp":1})");
  r = run("serve --port 0 --duration 1 --config " + bad_config);
  CHECK(r.rc == 2);
  CHECK(r.out.find("warp") != std::string::npos);

  const auto bad_states = write_file("bad_states.json", R"({"version":1,"phase":"journey","states":[]})");
  r = run("serve --port 0 --duration 1 --states " + bad_states);
  CHECK(r.rc == 2);

  const auto bad_items = write_file("bad_items.csv", "participant_id,item1\n1,3\n");
  r = run("score meq30 --input " + bad_items);
  CHECK(r.rc == 2);
}

TEST_CASE("score meq30 on item files rebuilt from the factor table") {
  std::ifstream in(data("cohort_factor_scores.csv"));
  const auto table = psychometrics::read_factor_scores_csv(in);
  REQUIRE(table.size() == 58);
  std::ostringstream items;
  items << "participant_id";
  for (int i = 1; i <= 30; ++i) items << ",item" << i;
  items << "\n";
  int expected_complete = 0;
  for (std::size_t k = 0; k < table.size(); ++k) {
    const auto r = psychometrics::synthesize_meq30(table[k]);
    items << (k + 1);
    for (int v : r) items << "," << v;
    items << "\n";
    expected_complete += psychometrics::complete_mte(psychometrics::snap_to_instrument(table[k])) ? 1 : 0;
  }
  const auto input = write_file("factor_items.csv", items.str());
  const auto out = (scratch() / "factor_scores.csv").string();
  const auto r = run("score meq30 --json --input " + input + " --out " + out);
  REQUIRE(r.rc == 0);
  const auto summary = last_json(r.out);
  CHECK(summary["n"] == 58);
  CHECK(summary["complete_mte"] == expected_complete);
  CHECK(std::abs(summary["complete_mte"].get<int>() - 17) <= 1);
  CHECK(std::abs(summary["factors"]["I"]["mean"].get<double>() - 57.2) <= 0.05);
  CHECK(std::abs(summary["factors"]["T"]["sd"].get<double>() - 21.6) <= 0.15);

  std::ifstream scored(out);
  const auto rows = psychometrics::read_factor_scores_csv(scored);
  REQUIRE(rows.size() == 58);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto want = psychometrics::snap_to_instrument(table[k]);
    CHECK(rows[k].I == doctest::Approx(want.I).epsilon(1e-9));
    CHECK(rows[k].M == doctest::Approx(want.M).epsilon(1e-9));
    CHECK(rows[k].P == doctest::Approx(want.P).epsilon(1e-9));
    CHECK(rows[k].T == doctest::Approx(want.T).epsilon(1e-9));
  }
}

TEST_CASE("score edi, ics and communitas") {
  std::ostringstream edi;
  edi << "participant_id";
  for (int i = 1; i <= 16; ++i) edi << ",item" << i;
  edi << "\n1";
  for (int i = 1; i <= 16; ++i) edi << "," << (i % 2 == 0 ? 80 : 20);
  edi << "\n2";
  for (int i = 1; i <= 16; ++i) edi << "," << (i % 2 == 0 ? 60 : 40);
  edi << "\n";
  auto r = run("score edi --json --input " + write_file("edi.csv", edi.str()));
  REQUIRE(r.rc == 0);
  auto j = last_json(r.out);
  CHECK(j["dissolution"]["mean"].get<double>() == doctest::Approx(70.0));
  CHECK(j["inflation"]["mean"].get<double>() == doctest::Approx(30.0));

  // every participant moves up two pictograms
  std::ostringstream ics;
  ics << "participant_id,pre_choice,post_choice\n";
  for (int i = 0; i < 12; ++i) ics << i << ",a,c\n";
  r = run("score ics --json --input " + write_file("ics.csv", ics.str()));
  REQUIRE(r.rc == 0);
  j = last_json(r.out);
  CHECK(j["pre"]["mean"].get<double>() == doctest::Approx(0.0));
  CHECK(j["post"]["mean"].get<double>() == doctest::Approx(2.0));
  CHECK(j["wilcoxon"]["p"].get<double>() < 0.001);

  r = run("score ics --input " + write_file("ics_bad.csv", "participant_id,pre_choice,post_choice\n1,a,z\n"));
  CHECK(r.rc == 2);

  std::ostringstream com;
  com << "participant_id";
  for (int i = 1; i <= 10; ++i) com << ",item" << i;
  com << "\n1,7,7,7,7,7,7,7,7,1,1\n2,1,1,1,1,1,1,1,1,7,7\n";
  r = run("score communitas --json --input " + write_file("com.csv", com.str()) + " --out " +
          (scratch() / "com_out.csv").string());
  REQUIRE(r.rc == 0);
  j = last_json(r.out);
  CHECK(j["total8"]["mean"].get<double>() == doctest::Approx(32.0));
}

TEST_CASE("compare reproduces the reference tally") {
  const auto r = run("compare --json --scores " + data("cohort_factor_summary.csv") + " --reference " +
                     data("reference_meq30.csv") + " --exclude own-control");
  REQUIRE(r.rc == 0);
  const auto j = last_json(r.out);
  CHECK(j["tally"]["more_intense_all4"] == 3);
  CHECK(j["tally"]["indistinguishable_all4"] == 3);
  CHECK(j["tally"]["indistinguishable_exactly3"] == 4);
  CHECK(j["comparisons"].size() == 26);
}

TEST_CASE("diag against a live server and a closed port") {
  SessionServer server(nettest::config(), nettest::local_options());
  server.start();
  auto r = run("diag --pings 10 --interval 10 --server 127.0.0.1:" + std::to_string(server.port()));
  CHECK(r.rc == 0);
  auto j = last_json(r.out);
  CHECK(j["verdict"] == "good");
  CHECK(j["loss_fraction"] == 0.0);
  CHECK(j["gate"]["pass"] == true);

  boost::asio::io_context io;
  std::uint16_t closed;
  {
    boost::asio::ip::tcp::acceptor a(io, {boost::asio::ip::make_address("127.0.0.1"), 0});
    closed = a.local_endpoint().port();
  }
  r = run("diag --pings 5 --server 127.0.0.1:" + std::to_string(closed));
  CHECK(r.rc == 2);
}

TEST_CASE("bot against a live server") {
  SessionServer server(nettest::config(), nettest::local_options());
  server.start();
  const auto script = write_file("idle.json", R"({"version":1,"name":"idle","actions":[{"action":"idle","seconds":1}]})");
  const auto r = run("bot --json --script " + script + " --server 127.0.0.1:" + std::to_string(server.port()));
  CHECK(r.rc == 0);
  const auto j = last_json(r.out);
  CHECK(j["name"] == "idle");
  CHECK(j["errors"].empty());
  CHECK(j["frames_received"].get<int>() >= 25);
}

TEST_CASE("serve for a fixed duration, then replay its log") {
  const auto log = (scratch() / "serve.jsonl").string();
  auto r = run("serve --port 0 --console-port 0 --duration 1 --log " + log + " --states " +
               data("sequences/preparation.json"));
  REQUIRE(r.rc == 0);
  std::istringstream lines(r.out);
  std::string first;
  std::getline(lines, first);
  const auto listening = nlohmann::json::parse(first);
  CHECK(listening["event"] == "listening");
  CHECK(listening["facilitator_token"].get<std::string>().size() == 32);
  CHECK(last_json(r.out)["event"] == "stopped");

  r = run("replay --json --log " + log);
  CHECK(r.rc == 0);
  CHECK(last_json(r.out)["identical"] == true);

  // corrupt one frame digest
  std::ifstream in(log);
  std::ostringstream tampered;
  std::string line;
  bool done = false;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line);
    if (!done && j.value("type", "") == "frame" && j["tick"] == 10) {
      j["digest"] = "0000000000000000";
      done = true;
    }
    tampered << j.dump() << "\n";
  }
  REQUIRE(done);
  r = run("replay --json --log " + write_file("tampered.jsonl", tampered.str()));
  CHECK(r.rc == 2);
  const auto j = last_json(r.out);
  CHECK(j["identical"] == false);
  CHECK(j["first_mismatch_tick"] == 10);
}

TEST_CASE("serve without --states plays the bundled sequences") {
  const auto r = run("serve --port 0 --duration 0.5");
  CHECK(r.rc == 0);
  CHECK(last_json(r.out)["state"] == "arrival");
}

TEST_CASE("ensemble with a facilitator runs a short sequence to the end") {
  auto cfg = nettest::config();
  cfg.time_scale = 600;
  cfg.start_held = true;
  cfg.max_participants = 2;
  SessionServer server(cfg, nettest::local_options());
  server.start();
  const auto r = run("ensemble --json --n 2 --facilitator --until-finished --script " + data("scripts/bow.json") +
                     " --server 127.0.0.1:" + std::to_string(server.port()));
  CHECK(r.rc == 0);
  const auto j = last_json(r.out);
  REQUIRE(j["bots"].size() == 2);
  for (const auto& b : j["bots"]) CHECK(b["states_observed"].size() == 24);
}
