#include "vlroute/sweep.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>
#include <omp.h>

#include "vlroute/reliability.hpp"

namespace vlroute {

ScenarioConfig sweep_point_config(const SweepSpec& spec, Protocol p, double value, std::uint64_t seed) {
  ScenarioConfig c = spec.base;
  c.protocol = p;
  c.seed = seed;
  c.topology_seed.reset();
  switch (spec.param) {
    case SweptParam::Sessions: c.sessions = static_cast<int>(std::lround(value)); break;
    case SweptParam::SevereFraction: c.severe_fraction = value; break;
    case SweptParam::EstimationError: c.estimation_error = value; break;
  }
  return c;
}

namespace {

struct Cell {
  Protocol protocol;
  double value;
  std::uint64_t seed;
};

std::vector<Cell> cells(const SweepSpec& spec) {
  std::vector<Cell> out;
  for (auto p : spec.protocols) {
    for (double v : spec.values) {
      for (int s = 0; s < spec.seeds; ++s) out.push_back({p, v, spec.first_seed + static_cast<std::uint64_t>(s)});
    }
  }
  return out;
}

RunRecord run_cell(const SweepSpec& spec, const Cell& c) {
  const auto cfg = sweep_point_config(spec, c.protocol, c.value, c.seed);
  return RunRecord{c.protocol, c.value, c.seed, run(cfg)};
}

std::string describe(const SweepSpec& spec, const Cell& c, const std::string& what) {
  std::ostringstream os;
  os << "sweep run failed (" << to_string(c.protocol) << ", " << to_string(spec.param) << "=" << c.value
     << ", seed " << c.seed << "): " << what << "\n"
     << scenario_to_ini(sweep_point_config(spec, c.protocol, c.value, c.seed));
  return os.str();
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

std::vector<RunRecord> run_sweep_records_serial(const SweepSpec& spec) {
  spec.validate();
  const auto cs = cells(spec);
  std::vector<RunRecord> out;
  out.reserve(cs.size());
  for (const auto& c : cs) {
    try {
      out.push_back(run_cell(spec, c));
    } catch (const std::exception& e) {
      throw std::runtime_error(describe(spec, c, e.what()));
    }
  }
  return out;
}

std::vector<RunRecord> run_sweep_records(const SweepSpec& spec) {
  spec.validate();
  const auto cs = cells(spec);
  std::vector<RunRecord> out(cs.size());
  std::vector<std::string> errors(cs.size());
  const auto n = static_cast<long>(cs.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (long i = 0; i < n; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = run_cell(spec, cs[static_cast<std::size_t>(i)]);
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  }
  for (std::size_t i = 0; i < cs.size(); ++i) {
    if (!errors[i].empty()) throw std::runtime_error(describe(spec, cs[i], errors[i]));
  }
  return out;
}

std::vector<AggregateRow> aggregate(const SweepSpec& spec, const std::vector<RunRecord>& records) {
  std::vector<AggregateRow> rows;
  for (auto p : spec.protocols) {
    for (double v : spec.values) {
      AggregateRow r;
      r.protocol = p;
      r.swept_param = std::string(to_string(spec.param));
      r.swept_value = v;
      double sum = 0, sum_dp = 0, sum_del = 0;
      std::vector<double> th;
      for (const auto& rec : records) {
        if (rec.protocol != p || rec.value != v) continue;
        th.push_back(rec.metrics.normalized_throughput);
        sum += rec.metrics.normalized_throughput;
        sum_dp += rec.metrics.duplex_ratio;
        sum_del += static_cast<double>(rec.metrics.delivered);
      }
      r.seeds = static_cast<int>(th.size());
      if (r.seeds == 0) throw std::logic_error("aggregate: empty sweep cell");
      const double n = static_cast<double>(r.seeds);
      r.mean_norm_throughput = sum / n;
      r.mean_duplex_ratio = sum_dp / n;
      r.mean_delivered = sum_del / n;
      double ss = 0;
      for (double x : th) ss += (x - r.mean_norm_throughput) * (x - r.mean_norm_throughput);
      r.sd_norm_throughput = r.seeds > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
      rows.push_back(r);
    }
  }
  return rows;
}

std::vector<AggregateRow> run_sweep(const SweepSpec& spec) { return aggregate(spec, run_sweep_records(spec)); }

std::vector<AggregateRow> run_sweep_serial(const SweepSpec& spec) {
  return aggregate(spec, run_sweep_records_serial(spec));
}

std::optional<TableFormat> parse_format(std::string_view s) {
  if (s == "csv" || s == "CSV") return TableFormat::Csv;
  if (s == "json" || s == "JSON") return TableFormat::Json;
  return std::nullopt;
}

std::string rows_to_csv(const std::vector<AggregateRow>& rows) {
  std::ostringstream os;
  os << "protocol,swept_param,swept_value,mean_norm_throughput,sd_norm_throughput,mean_duplex_ratio,"
        "mean_delivered,seeds\n";
  for (const auto& r : rows) {
    os << to_string(r.protocol) << ',' << r.swept_param << ',' << fmt_double(r.swept_value) << ','
       << fmt_double(r.mean_norm_throughput) << ',' << fmt_double(r.sd_norm_throughput) << ','
       << fmt_double(r.mean_duplex_ratio) << ',' << fmt_double(r.mean_delivered) << ',' << r.seeds << '\n';
  }
  return os.str();
}

std::string rows_to_json(const std::vector<AggregateRow>& rows) {
  auto arr = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back({{"protocol", std::string(to_string(r.protocol))},
                   {"swept_param", r.swept_param},
                   {"swept_value", std::stod(fmt_double(r.swept_value))},
                   {"mean_norm_throughput", std::stod(fmt_double(r.mean_norm_throughput))},
                   {"sd_norm_throughput", std::stod(fmt_double(r.sd_norm_throughput))},
                   {"mean_duplex_ratio", std::stod(fmt_double(r.mean_duplex_ratio))},
                   {"mean_delivered", std::stod(fmt_double(r.mean_delivered))},
                   {"seeds", r.seeds}});
  }
  return arr.dump(2) + "\n";
}

std::vector<AggregateRow> rows_from_json(const std::string& text) {
  std::vector<AggregateRow> rows;
  for (const auto& j : nlohmann::json::parse(text)) {
    AggregateRow r;
    r.protocol = parse_protocol(j.at("protocol").get<std::string>()).value();
    r.swept_param = j.at("swept_param").get<std::string>();
    r.swept_value = j.at("swept_value").get<double>();
    r.mean_norm_throughput = j.at("mean_norm_throughput").get<double>();
    r.sd_norm_throughput = j.at("sd_norm_throughput").get<double>();
    r.mean_duplex_ratio = j.at("mean_duplex_ratio").get<double>();
    r.mean_delivered = j.at("mean_delivered").get<double>();
    r.seeds = j.at("seeds").get<int>();
    rows.push_back(r);
  }
  return rows;
}

std::vector<AggregateRow> rows_from_csv(const std::string& text) {
  std::vector<AggregateRow> rows;
  std::istringstream is(text);
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) f.push_back(item);
    if (f.size() != 8) throw std::runtime_error("csv: expected 8 columns");
    AggregateRow r;
    r.protocol = parse_protocol(f[0]).value();
    r.swept_param = f[1];
    r.swept_value = std::stod(f[2]);
    r.mean_norm_throughput = std::stod(f[3]);
    r.sd_norm_throughput = std::stod(f[4]);
    r.mean_duplex_ratio = std::stod(f[5]);
    r.mean_delivered = std::stod(f[6]);
    r.seeds = std::stoi(f[7]);
    rows.push_back(r);
  }
  return rows;
}

void emit_tables(const std::vector<AggregateRow>& rows, TableFormat format, const std::string& path) {
  if (rows.empty()) throw std::invalid_argument("emit_tables: no rows");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("emit_tables: cannot write " + path);
  out << (format == TableFormat::Csv ? rows_to_csv(rows) : rows_to_json(rows));
  if (!out) throw std::runtime_error("emit_tables: write failed for " + path);
}

// ---------------------------------------------------------------------------

std::string VerifyReport::text() const {
  std::ostringstream os;
  os << "warm-up: " << warmup_superslots << " super-slots, " << (warmup_converged ? "converged" : "NOT converged")
     << "\n";
  os << "max |score - oracle|: " << max_rrs_deviation << " (tolerance " << tolerance << ")\n";
  os << "hop count mismatches: " << hop_mismatches << "\n";
  if (max_delivery_gap >= 0) {
    os << "max |score - route-union delivery probability|: " << max_delivery_gap << " (informational)\n";
  } else {
    os << "route-union delivery comparison skipped (graph larger than 25 nodes)\n";
  }
  if (!estimates_exact) os << "warning: estimation error is non-zero; deviations are expected\n";
  os << (passed ? "PASS" : "FAIL") << "\n";
  return os.str();
}

VerifyReport verify_run(const ScenarioConfig& cfg, const ConnectivityGraph& g) {
  ScenarioConfig c = cfg;
  c.protocol = Protocol::VlRoute;
  RunOptions opts;
  opts.warmup_only = true;
  const auto m = run(c, g, opts);

  VerifyReport rep;
  rep.warmup_converged = m.warmup_converged;
  rep.warmup_superslots = m.warmup_superslots;
  rep.estimates_exact = c.estimation_error == 0.0;

  const auto probs = reliability::contention_link_probs(g, c.cw);
  const auto sinks = g.sinks();
  const bool small = g.node_count() <= 25;
  rep.max_delivery_gap = small ? 0.0 : -1.0;
  for (std::size_t k = 0; k < sinks.size(); ++k) {
    const auto oracle = reliability::rrs_fixed_point_oracle(g, sinks[k], probs, {}, c.b_max);
    for (const auto& row : m.routing_snapshot) {
      if (row.sink != sinks[k]) continue;
      const auto& o = oracle[row.node];
      rep.max_rrs_deviation = std::max(rep.max_rrs_deviation, std::abs(row.rrs - o.score));
      const int oh = o.hops == reliability::kInfiniteHops ? -1 : o.hops;
      if (oh != row.hops) ++rep.hop_mismatches;
      if (small && row.node != sinks[k]) {
        const double p = reliability::delivery_prob_oracle(g, row.node, sinks[k], probs);
        rep.max_delivery_gap = std::max(rep.max_delivery_gap, std::abs(row.rrs - p));
      }
    }
  }
  const bool exact_ok = rep.max_rrs_deviation <= rep.tolerance && rep.hop_mismatches == 0 && rep.warmup_converged;
  rep.passed = rep.estimates_exact ? exact_ok : rep.warmup_converged;
  return rep;
}

VerifyReport verify_run(const ScenarioConfig& cfg) { return verify_run(cfg, build_topology(cfg)); }

}  // namespace vlroute
