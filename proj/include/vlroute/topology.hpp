#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vlroute/core.hpp"

namespace vlroute {

/// Static deployment: node positions, sink designation and the feasible
/// directed links with their true channel probabilities.
///
/// Links are stored contiguously and indexed by LinkIndex. The reverse of
/// every link is also present (feasibility is distance based), but the two
/// directions carry independent error probabilities.
class ConnectivityGraph {
 public:
  using LinkIndex = std::uint32_t;

  ConnectivityGraph() = default;

  /// Builds the link set and per-sector neighbor index from positions.
  ConnectivityGraph(std::vector<Position> positions, std::vector<NodeId> sinks, double range,
                    int n_sectors);

  std::size_t node_count() const { return positions_.size(); }
  int n_sectors() const { return n_sectors_; }
  double range() const { return range_; }

  Position position(NodeId n) const { return positions_.at(n); }
  std::span<const Position> positions() const { return positions_; }

  std::span<const NodeId> sinks() const { return sinks_; }
  bool is_sink(NodeId n) const;
  /// Position of `n` in the sink list, or nullopt.
  std::optional<std::size_t> sink_index(NodeId n) const;

  std::span<const DirectedLink> links() const { return links_; }
  std::span<DirectedLink> mutable_links() { return links_; }
  const DirectedLink& link(LinkIndex i) const { return links_[i]; }

  /// Index of link (from, to), or nullopt if infeasible.
  std::optional<LinkIndex> find_link(NodeId from, NodeId to) const;

  /// All out-neighbors of `n` (NB^n), ascending by id.
  std::span<const NodeId> neighbors(NodeId n) const { return neighbors_.at(n); }
  /// Out-neighbors of `n` in sector `s` (NB_s^n), ascending by id.
  std::span<const NodeId> neighbors_in(NodeId n, Sector s) const {
    return sector_neighbors_.at(n).at(static_cast<std::size_t>(s.index));
  }
  /// Outgoing link indices of `n`, parallel to neighbors(n).
  std::span<const LinkIndex> out_links(NodeId n) const { return out_links_.at(n); }

  void set_sinks(std::vector<NodeId> sinks);

 private:
  std::vector<Position> positions_;
  std::vector<NodeId> sinks_;
  double range_ = 0.0;
  int n_sectors_ = 4;
  std::vector<DirectedLink> links_;
  std::vector<std::vector<NodeId>> neighbors_;
  std::vector<std::vector<LinkIndex>> out_links_;
  std::vector<std::vector<std::vector<NodeId>>> sector_neighbors_;
};

/// rows x cols grid over an area_side square. Pitch is area_side/cols along x
/// and area_side/rows along y; nodes sit at cell centers.
ConnectivityGraph build_grid(int rows, int cols, double area_side, double range,
                             std::vector<NodeId> sinks, int n_sectors = 4);

/// Corner and center node ids of a rows x cols grid, deduplicated.
std::vector<NodeId> default_grid_sinks(int rows, int cols);

/// n positions i.i.d. uniform in the square. The first n_sinks sampled
/// positions are the sinks. Not forced connected.
ConnectivityGraph build_random(int n, double area_side, double range, int n_sinks,
                               std::uint64_t seed, int n_sectors = 4);

/// Draws per-direction true packet error probabilities uniformly in
/// [mean - spread, mean + spread] (clamped to [0,1]).
void assign_link_errors(ConnectivityGraph& g, double mean, double spread, std::uint64_t seed);

/// Marks each undirected pair severe with probability severe_fraction; both
/// directions of a pair share the class. The per-pair draw is independent of
/// severe_fraction, so raising the fraction only adds severe pairs.
void assign_blockage(ConnectivityGraph& g, double severe_fraction, double p_severe,
                     double p_mild, std::uint64_t seed);

/// JSON exchange format (see README for the schema).
std::string graph_to_json(const ConnectivityGraph& g);
ConnectivityGraph graph_from_json(const std::string& text);

}  // namespace vlroute
