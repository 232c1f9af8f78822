#pragma once

#include <string>
#include <vector>

#include "vlroute/reliability.hpp"
#include "vlroute/topology.hpp"

namespace vlroute::fixtures {

struct Fixture {
  std::string name;
  ConnectivityGraph graph;
};

/// Chain along x with the sink at the far end, unit pitch.
ConnectivityGraph chain(int n, double pitch = 1.0, double range = 1.2);

/// Source 0, two relays 1 and 2 side by side, sink 3.
ConnectivityGraph diamond();

/// Small graphs used by the oracle cross-checks: chains, diamonds, grids up
/// to 5x5 and random deployments of at most 25 nodes. Link probabilities are
/// drawn per fixture and stay moderate.
std::vector<Fixture> fixture_fleet();

/// Breadth-first enumeration of every simple path i -> k, keeping the ones
/// whose hops all strictly shrink the squared distance to k. Routes come back
/// sorted lexicographically.
reliability::RouteSet all_progress_paths(const ConnectivityGraph& g, NodeId i, SinkId k);

/// Route-union delivery probability computed from all_progress_paths.
double exhaustive_delivery_prob(const ConnectivityGraph& g, NodeId i, SinkId k,
                                const reliability::LinkProbMap& probs);

}  // namespace vlroute::fixtures
