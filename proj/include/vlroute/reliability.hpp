#pragma once

#include <limits>
#include <map>
#include <span>
#include <vector>

#include "vlroute/core.hpp"
#include "vlroute/topology.hpp"

namespace vlroute::reliability {

inline constexpr int kInfiniteHops = std::numeric_limits<int>::max();

/// Composite per-hop success probability p(i,j).
struct LinkProb {
  double p = 0.0;
};

/// Link probabilities keyed by link index in a ConnectivityGraph.
using LinkProbMap = std::vector<LinkProb>;

using Route = std::vector<NodeId>;  // i, ..., k
using RouteSet = std::vector<Route>;

/// Probability that a backlogged node transmits in a given slot, 2/(cw+1).
double transmit_prob(int cw);

/// Probability of winning access against m contenders (including self):
/// p0 (1-p0)^(m-1).
double access_prob(int cw, int m);

/// (1 - p_e) * p_acs * (1 - p_b).
LinkProb link_success_prob(double p_error, double p_access, double p_blockage);

/// Product of link probabilities along the route. A single-node route has
/// reliability 1. Throws if a hop is not a link of `g`.
double route_reliability(const ConnectivityGraph& g, std::span<const NodeId> route,
                         const LinkProbMap& probs);

/// True if hop a -> b makes strict Euclidean progress toward sink k.
bool makes_progress(const ConnectivityGraph& g, NodeId a, NodeId b, NodeId k);

/// Every simple route i -> k whose hops all make strict progress toward k,
/// by depth-first enumeration in ascending neighbor order.
RouteSet enumerate_forward_routes(const ConnectivityGraph& g, NodeId i, SinkId k);

/// 1 - prod_r (1 - p_r) over enumerate_forward_routes. 0 when no route.
double delivery_prob_oracle(const ConnectivityGraph& g, NodeId i, SinkId k, const LinkProbMap& probs);

/// Minimum hop count to k over forward-progress links (BFS from k over
/// reversed forward links). kInfiniteHops where unreachable.
std::vector<int> forward_hop_counts(const ConnectivityGraph& g, SinkId k);

/// Penalty (b_max - backlog)/b_max.
double backlog_penalty(int backlog, int b_max);

struct RrsEntry {
  double score = 0.0;
  int hops = kInfiniteHops;
};

/// Centralized evaluation of the reliability score recursion for sink k.
/// Nodes are processed in increasing hop count. For each node the best
/// sector value 1 - prod(1 - p(i,j) * score_j) over forward neighbors with
/// strictly lower hop count is scaled by the backlog penalty. The sink itself
/// is fixed at (1, 0). `backlogs[n]` is the backlog of n destined for k.
std::vector<RrsEntry> rrs_fixed_point_oracle(const ConnectivityGraph& g, SinkId k, const LinkProbMap& probs,
                                             std::span<const int> backlogs, int b_max);

/// Link probabilities the protocol assumes: p_e and p_b from the graph,
/// p_acs from access_prob with m = |NB_s^j| for the sector of j facing i.
LinkProbMap contention_link_probs(const ConnectivityGraph& g, int cw);

}  // namespace vlroute::reliability
