#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "vlroute/core.hpp"
#include "vlroute/rng.hpp"
#include "vlroute/topology.hpp"

namespace vlroute {

enum class Protocol : std::uint8_t { VlRoute, VlMacGeo, GrCsma };

std::string_view to_string(Protocol p);
std::optional<Protocol> parse_protocol(std::string_view s);

enum class TopologyKind : std::uint8_t { Grid, Random };

struct TopologySpec {
  TopologyKind kind = TopologyKind::Grid;
  int rows = 10;
  int cols = 10;
  int n_nodes = 100;  // random only
  double area_side = 25.0;
  double range = 4.0;
  int n_sinks = 5;              // random only
  std::vector<NodeId> sinks;    // grid override; empty = corners + center
  int n_sectors = 4;
};

struct ScenarioConfig {
  TopologySpec topology;
  Protocol protocol = Protocol::VlRoute;

  int sessions = 5;
  std::uint32_t packets_per_session = 200;
  std::vector<Session> explicit_sessions;  // overrides the generator when non-empty

  std::uint32_t data_bytes = 2500;
  std::uint32_t control_bytes = 20;
  std::uint32_t ack_bytes = 20;
  double link_rate_bps = 10e6;

  int cw = 4;             // ART contention window, in CMS
  int acn_window = 3;     // ACN backoff range, in CMS
  int cms_per_slot = 8;
  int b_max = 100;
  int retry_limit = 7;
  int csma_cw_max = 64;
  double backoff_u_ref = 25.0;

  double p_error_mean = 0.2;
  double p_error_spread = 0.1;
  double severe_fraction = 0.25;
  double p_severe = 0.9;
  double p_mild = 0.05;
  double estimation_error = 0.05;

  std::uint64_t seed = 1;
  // Separate seed for topology/link draws; defaults to `seed` when unset.
  std::optional<std::uint64_t> topology_seed;

  double duration_cap_s = 5.0;  // traffic-phase length limit
  int warmup_max_superslots = 400;
  int warmup_fixed_superslots = -1;  // >= 0: run exactly this many instead of until converged

  bool keep_trace = false;

  std::uint64_t graph_seed() const { return topology_seed.value_or(seed); }
  SimTime cms_duration() const { return airtime(control_bytes, link_rate_bps); }
  SimTime sector_slot() const { return {cms_duration().ticks * cms_per_slot}; }
  SimTime exchange_duration() const {
    return airtime(data_bytes, link_rate_bps) + airtime(ack_bytes, link_rate_bps);
  }

  /// Throws std::invalid_argument describing the first bad field.
  void validate() const;
};

enum class DropCause : std::uint8_t { Collision, RetryLimit, NoRoute, BufferOverflow };
inline constexpr std::size_t kDropCauses = 4;
std::string_view to_string(DropCause c);

struct RoutingSnapshotRow {
  NodeId node = kNoNode;
  SinkId sink = kNoNode;
  double rrs = 0.0;
  int hops = 0;  // -1 for infinity
};

struct RunMetrics {
  Protocol protocol = Protocol::VlRoute;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> delivered_per_session;
  std::uint64_t generated = 0;
  std::uint64_t delivered = 0;
  std::uint64_t in_flight = 0;
  std::array<std::uint64_t, kDropCauses> drops{};
  std::uint64_t delivered_bits = 0;
  double normalized_throughput = 0.0;
  std::uint64_t exchanges = 0;
  std::uint64_t duplex_exchanges = 0;
  double duplex_ratio = 0.0;
  std::uint64_t occupancy_conflicts = 0;
  std::uint64_t control_packets = 0;
  int warmup_superslots = 0;
  bool warmup_converged = false;
  SimTime traffic_start;
  SimTime end_time;
  bool hit_duration_cap = false;
  std::uint64_t trace_hash = 0;
  std::uint64_t trace_records = 0;
  double wall_seconds = 0.0;
  std::vector<RoutingSnapshotRow> routing_snapshot;

  std::uint64_t dropped() const;
  bool conserved() const { return generated == delivered + dropped() + in_flight; }
};

std::string metrics_to_json(const RunMetrics& m);

// ---------------------------------------------------------------------------

enum class LinkOutcome : std::uint8_t { Delivered, LostError, LostBlockage };

/// Blockage is drawn first; the error draw only happens on an open path.
LinkOutcome sample_link_outcome(const DirectedLink& link, RngStream& rng);

/// Global sector rotation shared by every idle node.
class SuperslotClock {
 public:
  SuperslotClock(int n_sectors, SimTime sector_slot);
  SimTime sector_slot() const { return slot_; }
  SimTime period() const { return {slot_.ticks * n_}; }
  std::int64_t slot_index(SimTime t) const { return t.ticks / slot_.ticks; }
  SimTime slot_start(SimTime t) const { return {slot_index(t) * slot_.ticks}; }
  SimTime next_boundary(SimTime t) const { return {(slot_index(t) + 1) * slot_.ticks}; }
  /// Sector every idle node listens to at t.
  Sector listening(SimTime t) const { return Sector{static_cast<int>(slot_index(t) % n_)}; }

 private:
  int n_;
  SimTime slot_;
};

/// Sources drawn uniformly from non-sinks, sinks uniformly from the sink set;
/// a (source, sink) pair is never reused. Session i depends only on the
/// seed and i, so shorter lists are prefixes of longer ones.
std::vector<Session> generate_sessions(const ConnectivityGraph& g, int count, std::uint32_t packets,
                                       std::uint64_t seed);

/// Tracks data-channel activity. Two activities conflict when their nodes
/// face each other (each lies in the other's facing sector, within range)
/// and at least one of them emits.
class OccupancyChecker {
 public:
  struct Activity {
    NodeId node = kNoNode;
    Sector facing;
    bool emitting = true;
    std::uint64_t exchange = 0;
    bool interfered = false;  // another emitter reached this node
  };
  using Handle = std::size_t;

  explicit OccupancyChecker(const ConnectivityGraph& g);

  Handle add(const Activity& a);
  void remove(Handle h);
  const Activity& get(Handle h) const { return slots_.at(h).act; }

  /// True if an active emitter in sector s of `observer` faces it.
  bool busy(NodeId observer, Sector s) const;
  std::uint64_t conflicts() const { return conflicts_; }
  std::size_t active() const { return active_; }

 private:
  bool faces(NodeId a, Sector facing, NodeId b) const;
  void mark(const Activity& a, int delta);

  struct Slot {
    Activity act;
    bool live = false;
  };
  const ConnectivityGraph* g_;
  std::vector<Slot> slots_;
  std::vector<Handle> free_;
  std::vector<int> facing_emitters_;  // [node * n_sectors + sector]
  std::uint64_t conflicts_ = 0;
  std::size_t active_ = 0;
};

enum class TraceKind : std::uint8_t {
  Control,
  Mode,
  ExchangeStart,
  ExchangeEnd,
  Delivered,
  Dropped,
  Warmup,
};
std::string_view to_string(TraceKind k);

/// Run trace: an FNV-1a hash over every record's binary fields, plus the
/// records themselves when kept. Text form: "<t_us> <node> <KIND> <a> <b>".
class Trace {
 public:
  explicit Trace(bool keep) : keep_(keep) {}
  void record(SimTime t, NodeId node, TraceKind kind, std::int64_t a, std::int64_t b = 0);
  std::uint64_t hash() const { return hash_; }
  std::uint64_t count() const { return count_; }
  void write(std::ostream& os) const;

 private:
  struct Rec {
    std::int64_t t;
    NodeId node;
    TraceKind kind;
    std::int64_t a, b;
  };
  void mix(const void* p, std::size_t n);
  bool keep_;
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
  std::uint64_t count_ = 0;
  std::vector<Rec> recs_;
};

/// Builds the graph described by the config (positions, sinks, link error
/// and blockage draws).
ConnectivityGraph build_topology(const ScenarioConfig& cfg);

struct RunOptions {
  std::ostream* trace_out = nullptr;
  bool warmup_only = false;  // stop after routing convergence
};

/// Runs one scenario on the given graph.
RunMetrics run(const ScenarioConfig& cfg, const ConnectivityGraph& g, const RunOptions& opts = {});
/// Builds the topology from the config first.
RunMetrics run(const ScenarioConfig& cfg, const RunOptions& opts = {});

}  // namespace vlroute
