// SPDX-License-Identifier: Apache-2.0
//
// presence: session server, scripted bots, network diagnostics and
// questionnaire analysis in one binary.
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure.
#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "presence/botclient.hpp"
#include "presence/csv.hpp"
#include "presence/errors.hpp"
#include "presence/event_log.hpp"
#include "presence/probe.hpp"
#include "presence/psychometrics.hpp"
#include "presence/server.hpp"
#include "presence/stats.hpp"

using namespace presence;
using json = nlohmann::json;

namespace {

std::atomic<bool> g_stop{false};
void on_signal(int) { g_stop = true; }

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = kDefaultPort;
};

Endpoint parse_endpoint(const std::string& s) {
  Endpoint e;
  const auto colon = s.rfind(':');
  if (colon == std::string::npos) {
    e.host = s;
    return e;
  }
  e.host = s.substr(0, colon);
  const std::string port = s.substr(colon + 1);
  try {
    std::size_t used = 0;
    const long v = std::stol(port, &used);
    if (used != port.size() || v < 1 || v > 65535) throw std::out_of_range("port");
    e.port = static_cast<std::uint16_t>(v);
  } catch (const std::exception&) {
    throw CLI::ValidationError("--server", "bad port in '" + s + "'");
  }
  if (e.host.empty()) e.host = "127.0.0.1";
  return e;
}

void require_file(const std::string& path) {
  if (!std::filesystem::is_regular_file(path)) throw std::runtime_error("cannot open '" + path + "'");
}

json read_json_file(const std::string& path) {
  require_file(path);
  std::ifstream in(path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw SchemaError("$", "'" + path + "' is not valid JSON");
  return j;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << std::setprecision(10);
  return out;
}

std::string fmt(double v, int digits = 6) {
  std::ostringstream s;
  s << std::setprecision(digits) << v;
  return s.str();
}

// --- serve -----------------------------------------------------------------

struct ServeArgs {
  std::uint16_t port = kDefaultPort;
  std::string bind = "127.0.0.1";
  std::vector<std::string> states;
  std::string config;
  std::string log;
  int console_port = -1;
  std::string token;
  std::string observer_token;
  std::optional<double> tick_rate;
  std::optional<double> time_scale;
  std::optional<int> max_participants;
  bool start_held = false;
  double duration = 0.0;
  bool exit_when_finished = false;
};

int run_serve(const ServeArgs& a) {
  SessionConfig cfg = a.config.empty() ? SessionConfig{} : session_config_from_json(read_json_file(a.config));
  if (a.tick_rate) cfg.tick_rate = *a.tick_rate;
  if (a.time_scale) cfg.time_scale = *a.time_scale;
  if (a.max_participants) cfg.max_participants = *a.max_participants;
  if (a.start_held) cfg.start_held = true;
  std::vector<std::string> state_files = a.states;
  if (state_files.empty() && cfg.sequences.empty()) {
    for (const char* name : {"preparation", "journey", "integration"}) {
      state_files.push_back(std::string(PRESENCE_SEQUENCE_DIR) + "/" + name + ".json");
    }
  }
  if (!state_files.empty()) {
    const ParamRegistry registry = cfg.registry_extension.is_null() ? ParamRegistry::canonical()
                                                                    : ParamRegistry::extended(cfg.registry_extension);
    cfg.sequences.clear();
    for (const auto& path : state_files) {
      try {
        cfg.sequences.push_back(sequence_from_json(read_json_file(path), registry));
      } catch (const SchemaError& e) {
        throw SchemaError(path + ":" + e.path(), e.what());
      }
    }
  }
  cfg.validate();

  ServerOptions opt;
  opt.bind_address = a.bind;
  opt.port = a.port;
  if (a.console_port >= 0) opt.console_port = static_cast<std::uint16_t>(a.console_port);
  opt.log_path = a.log;
  opt.facilitator_token = a.token;
  opt.observer_token = a.observer_token;

  SessionServer server(cfg, opt);
  server.start();
  json hello = {{"event", "listening"}, {"port", server.port()}, {"facilitator_token", server.facilitator_token()}};
  hello["console_port"] = server.console_port() ? json(*server.console_port()) : json(nullptr);
  std::cout << hello.dump() << std::endl;

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  const auto started = std::chrono::steady_clock::now();
  auto finished = server.finished();
  while (!g_stop) {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    if (a.duration > 0 && std::chrono::steady_clock::now() - started > std::chrono::duration<double>(a.duration)) break;
    if (a.exit_when_finished && finished.wait_for(std::chrono::seconds(0)) == std::future_status::ready) break;
  }
  json summary = server.session_view();
  server.stop();
  std::cout << json{{"event", "stopped"}, {"tick", summary["tick"]}, {"state", summary["state"]["name"]}}.dump()
            << std::endl;
  return 0;
}

// --- bots ------------------------------------------------------------------

std::optional<FaultProfile> load_fault(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return fault_profile_from_json(read_json_file(path));
}

void print_report_human(const BotReport& r) {
  std::cout << r.name << ": id=" << (r.id ? std::to_string(*r.id) : "-") << " node=" << r.node_index
            << " frames=" << r.frames_received << " states=" << r.states_observed.size()
            << " staleness_ms=" << (r.max_pose_staleness_ms ? fmt(*r.max_pose_staleness_ms, 4) : "-")
            << (r.partial ? " PARTIAL" : "") << (r.rejected ? " REJECTED" : "") << "\n";
  for (const auto& e : r.errors) std::cout << "  error: " << e << "\n";
}

struct BotArgs {
  std::string server = "127.0.0.1:38801";
  std::string script;
  std::string name;
  std::string fault;
  bool until_finished = false;
  double max_seconds = 300;
  bool json_out = false;
};

int run_bot_cmd(const BotArgs& a) {
  const Endpoint ep = parse_endpoint(a.server);
  require_file(a.script);
  BotScript script = load_bot_script(a.script);
  BotOptions opt;
  opt.name = a.name.empty() ? script.name : a.name;
  opt.faults = load_fault(a.fault);
  opt.until_finished = a.until_finished;
  opt.max_duration = std::chrono::milliseconds(static_cast<long>(a.max_seconds * 1000));
  const BotReport r = run_bot(ep.host, ep.port, script, opt);
  if (a.json_out) {
    std::cout << r.to_json().dump() << "\n";
  } else {
    print_report_human(r);
  }
  return r.errors.empty() && !r.partial ? 0 : 2;
}

struct EnsembleArgs {
  std::string server = "127.0.0.1:38801";
  std::size_t n = 4;
  std::vector<std::string> scripts;
  std::string fault;
  bool facilitator = false;
  bool until_finished = false;
  double max_seconds = 300;
  bool json_out = false;
};

int run_ensemble_cmd(const EnsembleArgs& a) {
  const Endpoint ep = parse_endpoint(a.server);
  std::vector<BotScript> scripts;
  for (const auto& p : a.scripts) {
    require_file(p);
    scripts.push_back(load_bot_script(p));
  }
  EnsembleOptions opt;
  opt.bots = a.n;
  opt.faults = load_fault(a.fault);
  opt.facilitator = a.facilitator;
  opt.until_finished = a.until_finished;
  opt.max_duration = std::chrono::milliseconds(static_cast<long>(a.max_seconds * 1000));

  auto emit = [&](const std::vector<BotReport>& bots, const std::optional<BotReport>& fac, const std::string& error) {
    if (a.json_out) {
      json j = {{"bots", json::array()}};
      for (const auto& b : bots) j["bots"].push_back(b.to_json());
      if (fac) j["facilitator"] = fac->to_json();
      if (!error.empty()) j["error"] = error;
      std::cout << j.dump() << "\n";
    } else {
      for (const auto& b : bots) print_report_human(b);
      if (fac) print_report_human(*fac);
      if (!error.empty()) std::cerr << "error: " << error << "\n";
    }
  };
  try {
    const EnsembleResult res = run_ensemble(ep.host, ep.port, scripts, opt);
    emit(res.bots, res.facilitator, "");
  } catch (const EnsembleError& e) {
    emit(e.reports(), std::nullopt, e.what());
    return 2;
  }
  return 0;
}

// --- diag ------------------------------------------------------------------

struct DiagArgs {
  std::string server = "127.0.0.1:38801";
  std::size_t pings = 20;
  int interval_ms = 50;
  int timeout_ms = 1000;
};

int run_diag(const DiagArgs& a) {
  const Endpoint ep = parse_endpoint(a.server);
  ProbeOptions opt;
  opt.pings = a.pings;
  opt.interval = std::chrono::milliseconds(a.interval_ms);
  opt.timeout = std::chrono::milliseconds(a.timeout_ms);
  const NetReport r = probe(ep.host, ep.port, opt);
  const GateResult g = stability_gate(r);
  json j = r.to_json();
  j["gate"] = {{"pass", g.pass}, {"warning", g.warning}, {"reason", g.reason}};
  std::cout << j.dump() << "\n";
  return g.pass ? 0 : 2;
}

// --- score -----------------------------------------------------------------

struct ScoreArgs {
  std::string instrument;
  std::string input;
  std::string out;
  bool json_out = false;
};

int score_meq30_cmd(const ScoreArgs& a, std::istream& in, json& summary) {
  const auto rows = psychometrics::read_item_csv(in, 30);
  std::vector<psychometrics::FactorScores> scores;
  std::vector<std::vector<std::string>> out_rows;
  int complete = 0;
  for (const auto& row : rows) {
    psychometrics::Meq30Response r{};
    for (std::size_t i = 0; i < 30; ++i) {
      const double v = parse_number(row.fields[i], row.id + ":q" + std::to_string(i + 1));
      if (v != std::floor(v)) throw SchemaError(row.id + ":q" + std::to_string(i + 1), "expected an integer 0..5");
      r[i] = static_cast<int>(v);
    }
    psychometrics::FactorScores f;
    try {
      f = psychometrics::score_meq30(r);
    } catch (const ValidationError& e) {
      throw SchemaError(row.id, e.what());
    }
    const bool mte = psychometrics::complete_mte(f);
    complete += mte ? 1 : 0;
    scores.push_back(f);
    out_rows.push_back({row.id, fmt(f.I, 10), fmt(f.M, 10), fmt(f.P, 10), fmt(f.T, 10), mte ? "1" : "0"});
  }
  if (!a.out.empty()) {
    auto out = open_out(a.out);
    write_csv_row(out, {"participant_id", "I", "M", "P", "T", "complete_mte"});
    for (const auto& r : out_rows) write_csv_row(out, r);
  }
  summary["n"] = rows.size();
  summary["complete_mte"] = complete;
  if (scores.size() >= 2) {
    const auto cohort = psychometrics::summarize_factors(scores);
    for (int k = 0; k < 4; ++k) {
      const auto f = static_cast<psychometrics::Factor>(k);
      summary["factors"][psychometrics::factor_code(f)] = {{"mean", cohort[k].mean}, {"sd", cohort[k].sd}};
    }
  }
  return 0;
}

int score_edi_cmd(const ScoreArgs& a, std::istream& in, json& summary) {
  const auto rows = psychometrics::read_item_csv(in, 16);
  std::vector<double> diss, infl;
  std::optional<std::ofstream> out;
  if (!a.out.empty()) {
    out = open_out(a.out);
    write_csv_row(*out, {"participant_id", "dissolution_mean", "inflation_mean"});
  }
  for (const auto& row : rows) {
    psychometrics::EdiResponse r{};
    for (std::size_t i = 0; i < 16; ++i) r[i] = parse_number(row.fields[i], row.id + ":item" + std::to_string(i + 1));
    psychometrics::EdiScores s;
    try {
      s = psychometrics::score_edi(r);
    } catch (const ValidationError& e) {
      throw SchemaError(row.id, e.what());
    }
    diss.push_back(s.dissolution_mean);
    infl.push_back(s.inflation_mean);
    if (out) write_csv_row(*out, {row.id, fmt(s.dissolution_mean, 10), fmt(s.inflation_mean, 10)});
  }
  summary["n"] = rows.size();
  if (diss.size() >= 2) {
    const auto d = stats::cohort_summary(diss);
    const auto i = stats::cohort_summary(infl);
    summary["dissolution"] = {{"mean", d.mean}, {"sd", d.sd}};
    summary["inflation"] = {{"mean", i.mean}, {"sd", i.sd}};
  }
  return 0;
}

char single_letter(const std::string& s, const std::string& where) {
  if (s.size() != 1) throw SchemaError(where, "expected one pictogram letter a..f");
  return s[0];
}

int score_ics_cmd(const ScoreArgs& a, std::istream& in, json& summary) {
  const CsvTable t = read_csv(in);
  const auto id_col = t.require("participant_id");
  const auto pre_col = t.require("pre_choice");
  const auto post_col = t.require("post_choice");
  std::vector<double> pre, post;
  std::optional<std::ofstream> out;
  if (!a.out.empty()) {
    out = open_out(a.out);
    write_csv_row(*out, {"participant_id", "pre", "post", "change"});
  }
  for (const auto& row : t.rows) {
    const std::string& id = row[id_col];
    int p0, p1;
    try {
      p0 = psychometrics::score_ics(single_letter(row[pre_col], id + ":pre_choice"));
      p1 = psychometrics::score_ics(single_letter(row[post_col], id + ":post_choice"));
    } catch (const ValidationError& e) {
      throw SchemaError(id, e.what());
    }
    pre.push_back(p0);
    post.push_back(p1);
    if (out) write_csv_row(*out, {id, std::to_string(p0), std::to_string(p1), std::to_string(p1 - p0)});
  }
  summary["n"] = pre.size();
  if (pre.size() >= 2) {
    const auto s0 = stats::cohort_summary(pre);
    const auto s1 = stats::cohort_summary(post);
    summary["pre"] = {{"mean", s0.mean}, {"sd", s0.sd}};
    summary["post"] = {{"mean", s1.mean}, {"sd", s1.sd}};
    try {
      const auto w = stats::wilcoxon_signed_rank(pre, post);
      summary["wilcoxon"] = {{"w", w.w}, {"n", w.n}, {"exact", w.exact}, {"p", w.p_two_sided}};
    } catch (const DomainError& e) {
      summary["wilcoxon"] = {{"error", e.what()}};
    }
  }
  return 0;
}

int score_communitas_cmd(const ScoreArgs& a, std::istream& in, json& summary) {
  const auto rows = psychometrics::read_item_csv(in, 10);
  std::vector<double> totals;
  std::optional<std::ofstream> out;
  if (!a.out.empty()) {
    out = open_out(a.out);
    write_csv_row(*out, {"participant_id", "total8", "pct_of_max", "bond_participant", "bond_facilitator"});
  }
  for (const auto& row : rows) {
    std::array<int, 10> items{};
    for (std::size_t i = 0; i < 10; ++i) {
      const std::string where = row.id + ":item" + std::to_string(i + 1);
      const double v = parse_number(row.fields[i], where);
      if (v != std::floor(v)) throw SchemaError(where, "expected an integer 1..7");
      items[i] = static_cast<int>(v);
    }
    psychometrics::CommunitasScores s;
    try {
      s = psychometrics::communitas_scores(items);
    } catch (const ValidationError& e) {
      throw SchemaError(row.id, e.what());
    }
    totals.push_back(s.total8);
    if (out) {
      write_csv_row(*out, {row.id, std::to_string(s.total8), fmt(s.pct_of_max, 10), std::to_string(s.bond_participant),
                           std::to_string(s.bond_facilitator)});
    }
  }
  summary["n"] = rows.size();
  if (totals.size() >= 2) {
    const auto c = stats::cohort_summary(totals);
    summary["total8"] = {{"mean", c.mean}, {"sd", c.sd}};
  }
  return 0;
}

int run_score(const ScoreArgs& a) {
  require_file(a.input);
  std::ifstream in(a.input);
  json summary = {{"instrument", a.instrument}, {"input", a.input}};
  if (a.instrument == "meq30") score_meq30_cmd(a, in, summary);
  if (a.instrument == "edi") score_edi_cmd(a, in, summary);
  if (a.instrument == "ics") score_ics_cmd(a, in, summary);
  if (a.instrument == "communitas") score_communitas_cmd(a, in, summary);
  std::cout << (a.json_out ? summary.dump() : summary.dump(2)) << "\n";
  return 0;
}

// --- compare ---------------------------------------------------------------

struct CompareArgs {
  std::string scores;
  std::string reference;
  double alpha = 0.05;
  std::string out;
  std::vector<std::string> exclude;
  bool json_out = false;
};

// Accepts per-participant factor scores (I,M,P,T columns) or a cohort
// summary with factor,n,mean,sd rows.
psychometrics::CohortFactors load_cohort(const std::string& path) {
  require_file(path);
  const CsvTable t = read_csv_file(path);
  if (t.column("factor") && t.column("mean")) {
    psychometrics::CohortFactors c{};
    std::array<bool, 4> seen{};
    const auto fc = t.require("factor"), nc = t.require("n"), mc = t.require("mean"), sc = t.require("sd");
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const auto& row = t.rows[r];
      const std::string where = "row " + std::to_string(r + 2);
      int k = -1;
      for (int f = 0; f < 4; ++f) {
        if (row[fc] == psychometrics::factor_code(static_cast<psychometrics::Factor>(f))) k = f;
      }
      if (k < 0) throw SchemaError(where + ":factor", "expected I, M, P or T");
      const double n = parse_number(row[nc], where + ":n");
      if (n < 2 || n != std::floor(n)) throw SchemaError(where + ":n", "expected an integer >= 2");
      c[k] = {static_cast<std::size_t>(n), parse_number(row[mc], where + ":mean"), parse_number(row[sc], where + ":sd")};
      seen[k] = true;
    }
    for (int f = 0; f < 4; ++f) {
      if (!seen[f]) throw SchemaError(std::string("factor ") + psychometrics::factor_code(static_cast<psychometrics::Factor>(f)), "missing row");
    }
    return c;
  }
  std::ifstream in(path);
  return psychometrics::summarize_factors(psychometrics::read_factor_scores_csv(in));
}

int run_compare(const CompareArgs& a) {
  const auto cohort = load_cohort(a.scores);
  require_file(a.reference);
  std::ifstream rin(a.reference);
  auto refs = psychometrics::read_reference_csv(rin);
  for (const auto& label : a.exclude) {
    const auto before = refs.size();
    std::erase_if(refs, [&](const auto& r) { return r.label == label; });
    if (refs.size() == before) throw SchemaError("--exclude", "no reference study labelled '" + label + "'");
  }
  const auto cmp = psychometrics::compare_to_reference(cohort, refs, a.alpha);
  const auto tl = psychometrics::tally(cmp);

  if (!a.out.empty()) {
    auto out = open_out(a.out);
    write_csv_row(out, {"study", "factor", "t", "df", "p", "distinguishable", "direction", "category"});
    for (const auto& s : cmp) {
      for (const auto& f : s.factors) {
        const char* dir = !f.distinguishable ? "same" : (f.reference_higher ? "reference_higher" : "cohort_higher");
        write_csv_row(out, {s.label, psychometrics::factor_code(f.factor), fmt(f.test.t, 10), fmt(f.test.df, 10),
                            fmt(f.test.p_two_sided, 10), f.distinguishable ? "1" : "0", dir, s.category()});
      }
    }
  }
  json studies = json::array();
  for (const auto& s : cmp) {
    studies.push_back({{"study", s.label},
                       {"category", s.category()},
                       {"indistinguishable", s.indistinguishable},
                       {"higher", s.higher},
                       {"lower", s.lower}});
  }
  json j = {{"alpha", a.alpha},
            {"studies", studies.size()},
            {"tally",
             {{"more_intense_all4", tl.more_intense_all4},
              {"indistinguishable_all4", tl.indistinguishable_all4},
              {"indistinguishable_exactly3", tl.indistinguishable_exactly3},
              {"more_intense_on2", tl.more_intense_on2},
              {"less_intense_on2", tl.less_intense_on2},
              {"less_intense_3or4", tl.less_intense_3or4}}}};
  if (a.json_out) {
    j["comparisons"] = std::move(studies);
    std::cout << j.dump() << "\n";
  } else {
    for (const auto& s : studies) {
      std::cout << std::left << std::setw(48) << s["study"].get<std::string>() << " " << s["category"].get<std::string>()
                << "\n";
    }
    std::cout << j["tally"].dump(2) << "\n";
  }
  return 0;
}

// --- replay ----------------------------------------------------------------

int run_replay(const std::string& path, bool json_out) {
  require_file(path);
  std::ifstream in(path);
  const ReplayReport r = replay_log(in);
  if (json_out) {
    std::cout << r.to_json().dump() << "\n";
  } else {
    std::cout << (r.identical() ? "identical" : "DIVERGED") << ": " << r.frames << " frames, " << r.mismatches
              << " mismatches, final tick " << r.final_tick << " digest " << r.final_digest << "\n";
  }
  return r.identical() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"presence: shared-space session server, bots, diagnostics and questionnaire analysis"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "presence 1.0");

  ServeArgs serve;
  auto* s = app.add_subcommand("serve", "Run the session server until interrupted");
  s->add_option("--port", serve.port, "Protocol port (0 = ephemeral)")->capture_default_str();
  s->add_option("--bind", serve.bind, "Bind address")->capture_default_str();
  s->add_option("--states", serve.states, "State sequence JSON files, played in order");
  s->add_option("--config", serve.config, "Session config JSON");
  s->add_option("--log", serve.log, "JSON Lines session log path");
  s->add_option("--console-port", serve.console_port, "Control endpoint port (0 = ephemeral)")->check(CLI::Range(0, 65535));
  s->add_option("--token", serve.token, "Facilitator token (random when omitted)");
  s->add_option("--observer-token", serve.observer_token, "Read-only console token");
  s->add_option("--tick-rate", serve.tick_rate, "Override tick rate (Hz)");
  s->add_option("--time-scale", serve.time_scale, "Override state clock multiplier");
  s->add_option("--max-participants", serve.max_participants, "Override participant capacity");
  s->add_flag("--start-held", serve.start_held, "Hold the sequence until a facilitator resumes it");
  s->add_option("--duration", serve.duration, "Stop after this many seconds");
  s->add_flag("--exit-when-finished", serve.exit_when_finished, "Stop once the sequence has finished");

  BotArgs bot;
  auto* b = app.add_subcommand("bot", "Run one scripted participant");
  b->add_option("--server", bot.server, "host:port")->capture_default_str();
  b->add_option("--script", bot.script, "Bot script JSON")->required();
  b->add_option("--name", bot.name, "Node label (defaults to the script name)");
  b->add_option("--fault", bot.fault, "Fault profile JSON for outgoing traffic");
  b->add_flag("--until-finished", bot.until_finished, "Stay until the state sequence finishes");
  b->add_option("--max-seconds", bot.max_seconds, "Hard time limit")->capture_default_str();
  b->add_flag("--json", bot.json_out, "Single-line JSON report");

  EnsembleArgs ens;
  auto* e = app.add_subcommand("ensemble", "Run several bots concurrently");
  e->add_option("--server", ens.server, "host:port")->capture_default_str();
  e->add_option("--n", ens.n, "Number of bots")->capture_default_str()->check(CLI::Range(1, 64));
  e->add_option("--script", ens.scripts, "Bot script JSON (repeat; assigned round robin)")->required();
  e->add_option("--fault", ens.fault, "Fault profile JSON; bot i uses seed + i");
  e->add_flag("--facilitator", ens.facilitator, "Add a spectating facilitator that resumes once all bots joined");
  e->add_flag("--until-finished", ens.until_finished, "Stay until the state sequence finishes");
  e->add_option("--max-seconds", ens.max_seconds, "Hard time limit per bot")->capture_default_str();
  e->add_flag("--json", ens.json_out, "Single-line JSON output");

  DiagArgs diag;
  auto* d = app.add_subcommand("diag", "Measure round-trip latency, jitter and loss to a server");
  d->add_option("--server", diag.server, "host:port")->capture_default_str();
  d->add_option("--pings", diag.pings, "Number of pings")->capture_default_str()->check(CLI::Range(2, 100000));
  d->add_option("--interval", diag.interval_ms, "Milliseconds between pings")->capture_default_str()->check(CLI::Range(0, 60000));
  d->add_option("--timeout", diag.timeout_ms, "Milliseconds before a ping counts as lost")->capture_default_str()->check(CLI::Range(1, 600000));

  ScoreArgs score;
  auto* sc = app.add_subcommand("score", "Score questionnaire responses");
  sc->add_option("instrument", score.instrument, "meq30, edi, ics or communitas")
      ->required()
      ->check(CLI::IsMember({"meq30", "edi", "ics", "communitas"}));
  sc->add_option("--input", score.input, "Responses CSV")->required();
  sc->add_option("--out", score.out, "Per-participant scores CSV");
  sc->add_flag("--json", score.json_out, "Single-line JSON summary");

  CompareArgs cmp;
  auto* c = app.add_subcommand("compare", "Compare MEQ30 factor scores with reference studies");
  c->add_option("--scores", cmp.scores, "Per-participant factor scores or factor summary CSV")->required();
  c->add_option("--reference", cmp.reference, "Reference study CSV")->required();
  c->add_option("--alpha", cmp.alpha, "Significance level")->capture_default_str()->check(CLI::Range(1e-12, 0.5));
  c->add_option("--out", cmp.out, "Per-factor comparison CSV");
  c->add_option("--exclude", cmp.exclude, "Reference study label to leave out (repeatable)");
  c->add_flag("--json", cmp.json_out, "Single-line JSON output");

  std::string replay_path;
  bool replay_json = false;
  auto* r = app.add_subcommand("replay", "Re-run a session log and verify every frame");
  r->add_option("--log", replay_path, "JSON Lines session log")->required();
  r->add_flag("--json", replay_json, "Single-line JSON output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*s) return run_serve(serve);
    if (*b) return run_bot_cmd(bot);
    if (*e) return run_ensemble_cmd(ens);
    if (*d) return run_diag(diag);
    if (*sc) return run_score(score);
    if (*c) return run_compare(cmp);
    if (*r) return run_replay(replay_path, replay_json);
  } catch (const CLI::ValidationError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  } catch (const SchemaError& err) {
    std::cerr << "error: schema: " << err.what() << "\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  }
  return 1;
}
