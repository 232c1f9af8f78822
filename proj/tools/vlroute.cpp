#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "vlroute/config.hpp"
#include "vlroute/engine.hpp"
#include "vlroute/sweep.hpp"
#include "vlroute/topology.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kVerifyFailed = 2;

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string protocol;
  std::string out;
  std::string format;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("-c,--config", c.config, "Scenario INI file")->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "Master seed")->each([&](const std::string&) { c.seed_set = true; });
  sub->add_option("--protocol", c.protocol, "VL-ROUTE | VL-MAC-GEO | GR-CSMA");
  sub->add_option("-o,--out", c.out, "Output path (default: stdout)");
}

vlroute::ScenarioConfig scenario_from(const Common& c) {
  vlroute::ScenarioConfig cfg = c.config.empty() ? vlroute::ScenarioConfig{} : vlroute::load_scenario(c.config);
  if (c.seed_set) cfg.seed = c.seed;
  if (!c.protocol.empty()) {
    const auto p = vlroute::parse_protocol(c.protocol);
    if (!p) throw CLI::ValidationError("--protocol", "unknown protocol " + c.protocol);
    cfg.protocol = *p;
  }
  return cfg;
}

void write_out(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Visible-light ad hoc network simulator"};
  app.require_subcommand(1);

  Common run_o, sweep_o, verify_o, graph_o;
  std::string trace_path;
  int sessions = -1;

  auto* run_cmd = app.add_subcommand("run", "Run one scenario and print its metrics as JSON");
  add_common(run_cmd, run_o);
  run_cmd->add_option("--format", run_o.format, "json")->check(CLI::IsMember({"json"}));
  run_cmd->add_option("--trace", trace_path, "Write the event trace to this file");
  run_cmd->add_option("--sessions", sessions, "Override the session count");

  bool serial = false;
  int seeds = -1;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a parameter sweep and emit aggregate tables");
  add_common(sweep_cmd, sweep_o);
  sweep_cmd->get_option("--config")->required();
  sweep_cmd->add_option("--format", sweep_o.format, "csv | json")->check(CLI::IsMember({"csv", "json"}));
  sweep_cmd->add_option("--seeds", seeds, "Override seeds per point");
  sweep_cmd->add_flag("--serial", serial, "Use the single-threaded reference runner");

  std::string graph_in;
  auto* verify_cmd = app.add_subcommand("verify", "Check warmed-up routing state against the oracle");
  add_common(verify_cmd, verify_o);
  verify_cmd->add_option("--graph", graph_in, "Graph JSON to verify instead of the configured topology")
      ->check(CLI::ExistingFile);

  auto* export_cmd = app.add_subcommand("export-graph", "Write the configured topology as JSON");
  add_common(export_cmd, graph_o);
  export_cmd->add_option("--format", graph_o.format, "json")->check(CLI::IsMember({"json"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*run_cmd) {
      auto cfg = scenario_from(run_o);
      if (sessions >= 0) cfg.sessions = sessions;
      vlroute::RunOptions opts;
      std::ofstream trace;
      if (!trace_path.empty()) {
        trace.open(trace_path);
        if (!trace) throw std::runtime_error("cannot write " + trace_path);
        opts.trace_out = &trace;
      }
      const auto m = vlroute::run(cfg, opts);
      write_out(run_o.out, vlroute::metrics_to_json(m) + "\n");
      return kOk;
    }
    if (*sweep_cmd) {
      auto spec = vlroute::load_sweep(sweep_o.config);
      if (sweep_o.seed_set) spec.first_seed = sweep_o.seed;
      if (seeds > 0) spec.seeds = seeds;
      if (!sweep_o.protocol.empty()) {
        const auto p = vlroute::parse_protocol(sweep_o.protocol);
        if (!p) throw CLI::ValidationError("--protocol", "unknown protocol " + sweep_o.protocol);
        spec.protocols = {*p};
      }
      const auto fmt = vlroute::parse_format(sweep_o.format.empty() ? "csv" : sweep_o.format).value();
      const auto rows = serial ? vlroute::run_sweep_serial(spec) : vlroute::run_sweep(spec);
      if (sweep_o.out.empty() || sweep_o.out == "-") {
        std::cout << (fmt == vlroute::TableFormat::Csv ? vlroute::rows_to_csv(rows) : vlroute::rows_to_json(rows));
      } else {
        vlroute::emit_tables(rows, fmt, sweep_o.out);
      }
      return kOk;
    }
    if (*verify_cmd) {
      const auto cfg = scenario_from(verify_o);
      vlroute::VerifyReport rep;
      if (!graph_in.empty()) {
        std::ifstream in(graph_in);
        std::stringstream ss;
        ss << in.rdbuf();
        rep = vlroute::verify_run(cfg, vlroute::graph_from_json(ss.str()));
      } else {
        rep = vlroute::verify_run(cfg);
      }
      write_out(verify_o.out, rep.text());
      return rep.passed ? kOk : kVerifyFailed;
    }
    if (*export_cmd) {
      const auto cfg = scenario_from(graph_o);
      write_out(graph_o.out, vlroute::graph_to_json(vlroute::build_topology(cfg)) + "\n");
      return kOk;
    }
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
