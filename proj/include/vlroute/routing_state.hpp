#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vlroute/core.hpp"
#include "vlroute/reliability.hpp"

namespace vlroute::routing {

using reliability::kInfiniteHops;

struct SinkTableEntry {
  SinkId sink = kNoNode;
  double rrs = 0.0;
  int mhc = kInfiniteHops;

  bool operator==(const SinkTableEntry&) const = default;
};

/// What a node advertises on every control packet it sends: its per-sink
/// (score, hop count) vector and how many distinct neighbors it has heard in
/// each of its sectors (used by listeners to estimate contention).
struct Advert {
  NodeId node = kNoNode;
  Position position;
  std::uint64_t version = 0;
  std::vector<SinkTableEntry> entries;  // one per sink, in global sink order
  std::vector<int> sector_counts;       // one per sector
};

struct NeighborObservation {
  NodeId neighbor = kNoNode;
  Position position;
  std::vector<SinkTableEntry> entries;
  std::vector<int> sector_counts;
  double est_p_error = 0.0;  // estimate of the link self -> neighbor
  double est_p_blockage = 0.0;
  SimTime last_heard;
  std::uint64_t version = 0;
  Sector sector;  // sector of the neighbor as seen from self
  double link_prob = 0.0;  // cached estimated p(self, neighbor)
};

struct EstimationModel {
  double relative_error = 0.0;
  std::uint64_t seed = 0;
};

struct LinkEstimate {
  double p_error = 0.0;
  double p_blockage = 0.0;
};

/// Static estimate of one directed link: each true value is scaled by
/// (1 + e * u) with u uniform in [-1, 1], clamped to [0,1]. One draw per
/// (link, component) per seed; repeated calls return the same values.
LinkEstimate estimate_link_prob(double true_p_error, double true_p_blockage, const EstimationModel& model,
                                NodeId from, NodeId to);

/// Backlog penalty for one sink, (b_max - backlog)/b_max.
double compute_beta(int backlog_for_k, int b_max);

/// One node's routing table, driven entirely by overheard adverts and the
/// node's own backlog.
class RoutingState {
 public:
  struct Params {
    int n_sectors = 4;
    int cw = 4;
    int b_max = 100;
  };

  /// Every entry starts at score 0 and infinite hops, except a sink's entry
  /// for itself which is pinned to (1, 0).
  RoutingState(NodeId self, Position self_position, std::span<const SinkId> sinks,
               std::span<const Position> sink_positions, Params params);

  NodeId self() const { return self_; }
  std::span<const SinkTableEntry> entries() const { return entries_; }
  const SinkTableEntry& entry(std::size_t sink_idx) const { return entries_.at(sink_idx); }
  std::uint64_t version() const { return version_; }

  /// Stores the observation and recomputes every sink entry. Returns true if
  /// the advertised state (entries or sector counts) changed.
  bool update_on_control(const NeighborObservation& obs);

  /// Sets the backlog destined for one sink and recomputes that entry.
  bool set_backlog(std::size_t sink_idx, int backlog);
  int backlog(std::size_t sink_idx) const { return backlogs_.at(sink_idx); }

  Advert advert() const;

  std::span<const NeighborObservation> neighbors() const { return neighbors_; }
  const NeighborObservation* neighbor(NodeId id) const;

  /// Largest advertised score for the sink among all heard neighbors.
  double max_neighbor_rrs(std::size_t sink_idx) const;

  /// Reliability of reaching the sink through a stored neighbor: cached
  /// p(self, j) times j's advertised score.
  double via_score(const NeighborObservation& obs, std::size_t sink_idx) const;
  double max_via_score(std::size_t sink_idx) const;

  /// p(self, j) composed from the stored estimates and j's advertised
  /// contention in the sector facing self.
  double estimated_link_prob(const NeighborObservation& obs) const;

  std::span<const int> sector_counts() const { return sector_counts_; }

 private:
  bool recompute(std::size_t sink_idx);
  bool forward(const NeighborObservation& obs, std::size_t sink_idx) const;

  NodeId self_;
  Position pos_;
  std::vector<SinkId> sinks_;
  std::vector<Position> sink_pos_;
  std::vector<double> self_to_sink_;
  Params params_;
  std::vector<SinkTableEntry> entries_;
  std::vector<int> backlogs_;
  std::vector<NeighborObservation> neighbors_;  // sorted by id
  std::vector<int> sector_counts_;
  std::vector<double> max_via_;
  std::uint64_t version_ = 0;
};

}  // namespace vlroute::routing
