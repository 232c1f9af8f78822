#pragma once

#include <string>
#include <vector>

#include "vlroute/config.hpp"
#include "vlroute/engine.hpp"

namespace vlroute {

struct RunRecord {
  Protocol protocol = Protocol::VlRoute;
  double value = 0.0;
  std::uint64_t seed = 0;
  RunMetrics metrics;
};

struct AggregateRow {
  Protocol protocol = Protocol::VlRoute;
  std::string swept_param;
  double swept_value = 0.0;
  double mean_norm_throughput = 0.0;
  double sd_norm_throughput = 0.0;
  double mean_duplex_ratio = 0.0;
  double mean_delivered = 0.0;
  int seeds = 0;
};

/// Scenario for one (protocol, value, seed) cell of the sweep grid.
ScenarioConfig sweep_point_config(const SweepSpec& spec, Protocol p, double value, std::uint64_t seed);

/// Every run of the sweep, ordered by (protocol, value, seed) as listed in
/// the spec. The parallel version distributes runs over OpenMP threads; the
/// serial one is the reference it must match exactly.
std::vector<RunRecord> run_sweep_records(const SweepSpec& spec);
std::vector<RunRecord> run_sweep_records_serial(const SweepSpec& spec);

std::vector<AggregateRow> aggregate(const SweepSpec& spec, const std::vector<RunRecord>& records);

std::vector<AggregateRow> run_sweep(const SweepSpec& spec);
std::vector<AggregateRow> run_sweep_serial(const SweepSpec& spec);

enum class TableFormat : std::uint8_t { Csv, Json };
std::optional<TableFormat> parse_format(std::string_view s);

std::string rows_to_csv(const std::vector<AggregateRow>& rows);
std::string rows_to_json(const std::vector<AggregateRow>& rows);
std::vector<AggregateRow> rows_from_json(const std::string& text);
std::vector<AggregateRow> rows_from_csv(const std::string& text);

/// Throws on empty rows or an unwritable path.
void emit_tables(const std::vector<AggregateRow>& rows, TableFormat format, const std::string& path);

struct VerifyReport {
  bool warmup_converged = false;
  int warmup_superslots = 0;
  double max_rrs_deviation = 0.0;
  int hop_mismatches = 0;
  double max_delivery_gap = 0.0;  // informational: score vs route-union probability
  bool estimates_exact = true;
  double tolerance = 1e-9;
  bool passed = false;
  std::string text() const;
};

/// Warm-up only run of VL-ROUTE; compares every node's distributed
/// (score, hops) per sink against the centralized oracle. With non-zero
/// estimation error deviations are reported but do not fail the check.
VerifyReport verify_run(const ScenarioConfig& cfg, const ConnectivityGraph& g);
VerifyReport verify_run(const ScenarioConfig& cfg);

}  // namespace vlroute
