#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vlroute/config.hpp"
#include "vlroute/sweep.hpp"

using namespace vlroute;

namespace {

SweepSpec tiny_spec() {
  SweepSpec s;
  s.base.topology.rows = 4;
  s.base.topology.cols = 4;
  s.base.topology.area_side = 10.0;
  s.base.packets_per_session = 10;
  s.base.duration_cap_s = 0.3;
  s.param = SweptParam::Sessions;
  s.values = {1, 3};
  s.seeds = 2;
  return s;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST(Config, DefaultsMatchTableOne) {
  const auto c = parse_scenario("");
  EXPECT_EQ(c.topology.rows, 10);
  EXPECT_EQ(c.topology.cols, 10);
  EXPECT_EQ(c.topology.area_side, 25.0);
  EXPECT_EQ(c.topology.range, 4.0);
  EXPECT_EQ(c.packets_per_session, 200u);
  EXPECT_EQ(c.data_bytes, 2500u);
  EXPECT_EQ(c.control_bytes, 20u);
  EXPECT_EQ(c.link_rate_bps, 10e6);
  EXPECT_EQ(c.p_error_mean, 0.2);
  EXPECT_EQ(c.severe_fraction, 0.25);
  EXPECT_EQ(c.p_severe, 0.9);
  EXPECT_EQ(c.p_mild, 0.05);
  EXPECT_EQ(c.estimation_error, 0.05);
}

TEST(Config, ParsesEverySection) {
  const auto c = parse_scenario(R"(
# comment
[topology]
kind = random
nodes = 40
area_side = 12
range = 3.5
sinks = 2
[traffic]
sessions = 7
packets_per_session = 50
[mac]
cw = 6
cms_per_slot = 11
b_max = 20
[channel]
severe_fraction = 0.4
estimation_error = 0.1
[run]
protocol = GR-CSMA
seed = 99
topology_seed = 5
duration_cap_s = 2.5
)");
  EXPECT_EQ(c.topology.kind, TopologyKind::Random);
  EXPECT_EQ(c.topology.n_nodes, 40);
  EXPECT_EQ(c.topology.n_sinks, 2);
  EXPECT_EQ(c.sessions, 7);
  EXPECT_EQ(c.cw, 6);
  EXPECT_EQ(c.b_max, 20);
  EXPECT_EQ(c.severe_fraction, 0.4);
  EXPECT_EQ(c.protocol, Protocol::GrCsma);
  EXPECT_EQ(c.seed, 99u);
  EXPECT_EQ(c.graph_seed(), 5u);
  EXPECT_EQ(c.duration_cap_s, 2.5);
}

TEST(Config, SinkIdsOverride) {
  const auto c = parse_scenario("[topology]\nrows = 1\ncols = 3\nsink_ids = 2, 0\n");
  EXPECT_EQ(c.topology.sinks, (std::vector<NodeId>{2, 0}));
}

TEST(Config, RejectsUnknownAndMalformed) {
  EXPECT_THROW(parse_scenario("[bogus]\nx = 1\n"), std::runtime_error);
  EXPECT_THROW(parse_scenario("[traffic]\nsesions = 3\n"), std::runtime_error);
  EXPECT_THROW(parse_scenario("[traffic]\nsessions = many\n"), std::runtime_error);
  EXPECT_THROW(parse_scenario("[traffic]\nsessions = 3x\n"), std::runtime_error);
  EXPECT_THROW(parse_scenario("[traffic]\npackets_per_session = -4\n"), std::runtime_error);
  EXPECT_THROW(parse_scenario("[run]\nprotocol = AODV\n"), std::runtime_error);
  EXPECT_THROW(parse_scenario("[channel]\nsevere_fraction = 2\n"), std::runtime_error);
  EXPECT_THROW(load_scenario("/nonexistent/file.ini"), std::runtime_error);
}

TEST(Config, IniRoundTrip) {
  ScenarioConfig c;
  c.topology.kind = TopologyKind::Random;
  c.topology.n_nodes = 33;
  c.topology.sinks = {1, 4};
  c.protocol = Protocol::VlMacGeo;
  c.sessions = 12;
  c.cw = 5;
  c.cms_per_slot = 10;
  c.severe_fraction = 0.35;
  c.estimation_error = 0.125;
  c.seed = 77;
  c.topology_seed = 3;
  c.duration_cap_s = 1.75;
  const auto back = parse_scenario(scenario_to_ini(c));
  EXPECT_EQ(scenario_to_ini(back), scenario_to_ini(c));
  EXPECT_EQ(back.topology.sinks, c.topology.sinks);
  EXPECT_EQ(back.graph_seed(), 3u);
  EXPECT_EQ(back.estimation_error, 0.125);
}

TEST(Config, ValueLists) {
  EXPECT_EQ(parse_value_list("2,4, 8"), (std::vector<double>{2, 4, 8}));
  EXPECT_EQ(parse_value_list("2:20:2").size(), 10u);
  const auto r = parse_value_list("0:0.6:0.2");
  ASSERT_EQ(r.size(), 4u);
  EXPECT_NEAR(r.back(), 0.6, 1e-12);
  EXPECT_THROW(parse_value_list("5:1:1"), std::runtime_error);
  EXPECT_THROW(parse_value_list("1,x"), std::runtime_error);
}

TEST(Config, SweepSection) {
  const auto s = parse_sweep(
      "[traffic]\nsessions = 5\n[sweep]\nparam = severe_fraction\nvalues = 0,0.2\nseeds = 3\nprotocols = VL-ROUTE\n");
  EXPECT_EQ(s.param, SweptParam::SevereFraction);
  EXPECT_EQ(s.values, (std::vector<double>{0, 0.2}));
  EXPECT_EQ(s.seeds, 3);
  EXPECT_EQ(s.protocols, (std::vector<Protocol>{Protocol::VlRoute}));
  EXPECT_EQ(s.base.sessions, 5);
  EXPECT_THROW(parse_sweep("[sweep]\nparam = humidity\n"), std::runtime_error);
  SweepSpec bad;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Sweep, PointConfigAppliesValueAndSeed) {
  auto s = tiny_spec();
  s.param = SweptParam::EstimationError;
  const auto c = sweep_point_config(s, Protocol::GrCsma, 0.3, 12);
  EXPECT_EQ(c.estimation_error, 0.3);
  EXPECT_EQ(c.seed, 12u);
  EXPECT_EQ(c.protocol, Protocol::GrCsma);
  s.param = SweptParam::Sessions;
  EXPECT_EQ(sweep_point_config(s, Protocol::VlRoute, 6.0, 1).sessions, 6);
}

TEST(Sweep, ParallelMatchesSerialExactly) {
  const auto s = tiny_spec();
  const auto par = run_sweep_records(s);
  const auto ser = run_sweep_records_serial(s);
  ASSERT_EQ(par.size(), 3u * 2u * 2u);
  ASSERT_EQ(par.size(), ser.size());
  for (std::size_t i = 0; i < par.size(); ++i) {
    EXPECT_EQ(par[i].protocol, ser[i].protocol);
    EXPECT_EQ(par[i].value, ser[i].value);
    EXPECT_EQ(par[i].seed, ser[i].seed);
    EXPECT_EQ(par[i].metrics.trace_hash, ser[i].metrics.trace_hash);
    EXPECT_EQ(par[i].metrics.delivered, ser[i].metrics.delivered);
  }
  EXPECT_EQ(rows_to_csv(aggregate(s, par)), rows_to_csv(aggregate(s, ser)));
}

TEST(Sweep, AggregateIsArithmeticMean) {
  const auto s = tiny_spec();
  const auto recs = run_sweep_records_serial(s);
  const auto rows = aggregate(s, recs);
  ASSERT_EQ(rows.size(), 6u);
  for (const auto& r : rows) {
    double sum = 0, sum_del = 0;
    int n = 0;
    for (const auto& rec : recs) {
      if (rec.protocol != r.protocol || rec.value != r.swept_value) continue;
      sum += rec.metrics.normalized_throughput;
      sum_del += static_cast<double>(rec.metrics.delivered);
      ++n;
    }
    EXPECT_EQ(r.seeds, s.seeds);
    EXPECT_EQ(n, s.seeds);
    EXPECT_DOUBLE_EQ(r.mean_norm_throughput, sum / n);
    EXPECT_DOUBLE_EQ(r.mean_delivered, sum_del / n);
    EXPECT_TRUE(std::isfinite(r.sd_norm_throughput));
  }
}

TEST(Sweep, RerunIsByteIdentical) {
  const auto s = tiny_spec();
  EXPECT_EQ(rows_to_csv(run_sweep(s)), rows_to_csv(run_sweep(s)));
}

TEST(Sweep, FailureEchoesConfig) {
  auto s = tiny_spec();
  s.values = {1000};  // more sessions than source-sink pairs
  s.protocols = {Protocol::VlRoute};
  s.seeds = 1;
  try {
    run_sweep(s);
    FAIL() << "expected a failure";
  } catch (const std::runtime_error& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("sessions=1000"), std::string::npos) << what;
    EXPECT_NE(what.find("[traffic]"), std::string::npos) << what;
  }
}

namespace {

std::vector<AggregateRow> sample_rows(int n) {
  std::vector<AggregateRow> rows;
  for (int i = 0; i < n; ++i) {
    AggregateRow r;
    r.protocol = static_cast<Protocol>(i % 3);
    r.swept_param = "sessions";
    r.swept_value = 2 * (i / 3 + 1);
    r.mean_norm_throughput = 0.1 * i + 1.0 / 3.0;
    r.sd_norm_throughput = 0.01 * i;
    r.mean_duplex_ratio = 0.5 / (i + 1);
    r.mean_delivered = 100.0 * i + 0.25;
    r.seeds = 10;
    rows.push_back(r);
  }
  return rows;
}

}  // namespace

TEST(Tables, CsvHasHeaderPlusOneLinePerRow) {
  const auto path = temp_path("vlroute_rows.csv");
  emit_tables(sample_rows(30), TableFormat::Csv, path);
  std::ifstream in(path);
  std::string line;
  int lines = 0;
  std::getline(in, line);
  EXPECT_EQ(line,
            "protocol,swept_param,swept_value,mean_norm_throughput,sd_norm_throughput,mean_duplex_ratio,"
            "mean_delivered,seeds");
  ++lines;
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines, 31);
  std::remove(path.c_str());
}

TEST(Tables, EmptyRowsAndBadPathFail) {
  EXPECT_THROW(emit_tables({}, TableFormat::Csv, temp_path("x.csv")), std::invalid_argument);
  try {
    emit_tables(sample_rows(1), TableFormat::Json, "/nonexistent/dir/out.json");
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/dir/out.json"), std::string::npos);
  }
}

TEST(Tables, JsonAndCsvAgreeAfterParsing) {
  const auto rows = sample_rows(12);
  const auto a = rows_from_json(rows_to_json(rows));
  const auto b = rows_from_csv(rows_to_csv(rows));
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].protocol, b[i].protocol);
    EXPECT_EQ(a[i].swept_param, b[i].swept_param);
    EXPECT_EQ(a[i].swept_value, b[i].swept_value);
    EXPECT_EQ(a[i].mean_norm_throughput, b[i].mean_norm_throughput);
    EXPECT_EQ(a[i].sd_norm_throughput, b[i].sd_norm_throughput);
    EXPECT_EQ(a[i].mean_duplex_ratio, b[i].mean_duplex_ratio);
    EXPECT_EQ(a[i].mean_delivered, b[i].mean_delivered);
    EXPECT_EQ(a[i].seeds, b[i].seeds);
    EXPECT_NEAR(a[i].mean_norm_throughput, rows[i].mean_norm_throughput, 1e-9);
  }
}

TEST(Tables, FormatNames) {
  EXPECT_EQ(parse_format("csv"), TableFormat::Csv);
  EXPECT_EQ(parse_format("json"), TableFormat::Json);
  EXPECT_FALSE(parse_format("xml").has_value());
}

TEST(Verify, ChainPassesAndNoisyEstimatesOnlyWarn) {
  auto c = parse_scenario(
      "[topology]\nrows = 1\ncols = 3\narea_side = 7.5\nrange = 3\nsink_ids = 2\n"
      "[channel]\nestimation_error = 0\n");
  const auto exact = verify_run(c);
  EXPECT_TRUE(exact.passed) << exact.text();
  EXPECT_LT(exact.max_rrs_deviation, 1e-9);
  EXPECT_EQ(exact.hop_mismatches, 0);

  c.estimation_error = 0.4;
  const auto noisy = verify_run(c);
  EXPECT_TRUE(noisy.passed);
  EXPECT_FALSE(noisy.estimates_exact);
  EXPECT_NE(noisy.text().find("warning"), std::string::npos);
}

TEST(Verify, RandomTenNodeGraph) {
  auto c = parse_scenario("[topology]\nkind = random\nnodes = 10\narea_side = 6\nrange = 3\nsinks = 2\n"
                          "[channel]\nestimation_error = 0\n[run]\nseed = 4\n");
  const auto rep = verify_run(c);
  EXPECT_TRUE(rep.passed) << rep.text();
  EXPECT_LT(rep.max_rrs_deviation, 1e-9);
}
