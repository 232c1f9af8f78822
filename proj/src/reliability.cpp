#include "vlroute/reliability.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

namespace vlroute::reliability {

double transmit_prob(int cw) {
  if (cw < 1) throw std::invalid_argument("transmit_prob: cw must be >= 1");
  return 2.0 / (cw + 1.0);
}

double access_prob(int cw, int m) {
  if (m < 1) throw std::invalid_argument("access_prob: m must be >= 1");
  const double p0 = transmit_prob(cw);
  return p0 * std::pow(1.0 - p0, m - 1);
}

LinkProb link_success_prob(double p_error, double p_access, double p_blockage) {
  return {(1.0 - p_error) * p_access * (1.0 - p_blockage)};
}

double route_reliability(const ConnectivityGraph& g, std::span<const NodeId> route, const LinkProbMap& probs) {
  double p = 1.0;
  for (std::size_t h = 1; h < route.size(); ++h) {
    const auto idx = g.find_link(route[h - 1], route[h]);
    if (!idx) throw std::invalid_argument("route_reliability: hop is not a feasible link");
    if (*idx >= probs.size()) throw std::invalid_argument("route_reliability: missing link probability");
    p *= probs[*idx].p;
  }
  return p;
}

bool makes_progress(const ConnectivityGraph& g, NodeId a, NodeId b, NodeId k) {
  const auto pk = g.position(k);
  return distance(g.position(b), pk) < distance(g.position(a), pk);
}

namespace {

void dfs_routes(const ConnectivityGraph& g, NodeId at, SinkId k, Route& path, RouteSet& out) {
  if (at == k) {
    out.push_back(path);
    return;
  }
  for (NodeId nb : g.neighbors(at)) {
    // Strict progress already rules out revisiting a node.
    if (!makes_progress(g, at, nb, k)) continue;
    path.push_back(nb);
    dfs_routes(g, nb, k, path, out);
    path.pop_back();
  }
}

}  // namespace

RouteSet enumerate_forward_routes(const ConnectivityGraph& g, NodeId i, SinkId k) {
  if (i == k) throw std::invalid_argument("enumerate_forward_routes: i == k");
  RouteSet out;
  Route path{i};
  dfs_routes(g, i, k, path, out);
  return out;
}

double delivery_prob_oracle(const ConnectivityGraph& g, NodeId i, SinkId k, const LinkProbMap& probs) {
  double all_fail = 1.0;
  for (const auto& r : enumerate_forward_routes(g, i, k)) {
    all_fail *= 1.0 - route_reliability(g, r, probs);
  }
  return 1.0 - all_fail;
}

std::vector<int> forward_hop_counts(const ConnectivityGraph& g, SinkId k) {
  std::vector<int> hops(g.node_count(), kInfiniteHops);
  hops[k] = 0;
  std::deque<NodeId> frontier{k};
  while (!frontier.empty()) {
    const NodeId j = frontier.front();
    frontier.pop_front();
    // Predecessors i of j are j's neighbors (links are symmetric) for which
    // the hop i -> j is forward progress.
    for (NodeId i : g.neighbors(j)) {
      if (hops[i] != kInfiniteHops) continue;
      if (!makes_progress(g, i, j, k)) continue;
      hops[i] = hops[j] + 1;
      frontier.push_back(i);
    }
  }
  return hops;
}

double backlog_penalty(int backlog, int b_max) {
  if (b_max < 1) throw std::invalid_argument("b_max must be >= 1");
  if (backlog < 0 || backlog > b_max) throw std::invalid_argument("backlog outside [0, b_max]");
  return static_cast<double>(b_max - backlog) / b_max;
}

std::vector<RrsEntry> rrs_fixed_point_oracle(const ConnectivityGraph& g, SinkId k, const LinkProbMap& probs,
                                             std::span<const int> backlogs, int b_max) {
  const auto n = g.node_count();
  const auto hops = forward_hop_counts(g, k);
  std::vector<RrsEntry> out(n);

  std::vector<NodeId> order(n);
  std::iota(order.begin(), order.end(), NodeId{0});
  std::stable_sort(order.begin(), order.end(), [&](NodeId a, NodeId b) { return hops[a] < hops[b]; });

  for (NodeId i : order) {
    out[i].hops = hops[i];
    if (i == k) {
      out[i].score = 1.0;
      continue;
    }
    if (hops[i] == kInfiniteHops) continue;
    double best = 0.0;
    for (int s = 0; s < g.n_sectors(); ++s) {
      double fail = 1.0;
      for (NodeId j : g.neighbors_in(i, Sector{s})) {
        if (!makes_progress(g, i, j, k) || hops[j] >= hops[i]) continue;
        const auto idx = *g.find_link(i, j);
        fail *= 1.0 - probs.at(idx).p * out[j].score;
      }
      best = std::max(best, 1.0 - fail);
    }
    const int b = backlogs.empty() ? 0 : backlogs[i];
    out[i].score = backlog_penalty(b, b_max) * best;
  }
  return out;
}

LinkProbMap contention_link_probs(const ConnectivityGraph& g, int cw) {
  LinkProbMap probs(g.links().size());
  for (std::size_t idx = 0; idx < g.links().size(); ++idx) {
    const auto& l = g.link(static_cast<ConnectivityGraph::LinkIndex>(idx));
    const int m = std::max<int>(1, static_cast<int>(g.neighbors_in(l.to, l.sector_at_to).size()));
    probs[idx] = link_success_prob(l.p_error, access_prob(cw, m), l.p_blockage);
  }
  return probs;
}

}  // namespace vlroute::reliability
