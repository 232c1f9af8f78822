#include "fixtures.hpp"

#include <algorithm>
#include <deque>

namespace vlroute::fixtures {

ConnectivityGraph chain(int n, double pitch, double range) {
  std::vector<Position> pos;
  for (int i = 0; i < n; ++i) pos.push_back({pitch * i, 0.0});
  return ConnectivityGraph(pos, {static_cast<NodeId>(n - 1)}, range, 4);
}

ConnectivityGraph diamond() {
  // 1 and 2 are 2 m apart, out of each other's range.
  std::vector<Position> pos{{0.0, 0.0}, {1.0, 1.0}, {1.0, -1.0}, {2.0, 0.0}};
  return ConnectivityGraph(pos, {3}, 1.5, 4);
}

namespace {

void perturb(ConnectivityGraph& g, std::uint64_t seed, double severe) {
  assign_link_errors(g, 0.2, 0.1, seed);
  assign_blockage(g, severe, 0.9, 0.05, seed + 1);
}

}  // namespace

std::vector<Fixture> fixture_fleet() {
  std::vector<Fixture> out;
  auto add = [&](std::string name, ConnectivityGraph g, std::uint64_t seed, double severe = 0.25) {
    perturb(g, seed, severe);
    out.push_back({std::move(name), std::move(g)});
  };

  add("chain3", chain(3), 11);
  add("chain5", chain(5), 12);
  add("chain8", chain(8), 13);
  // Two-hop reach along the chain.
  add("chain6_wide", chain(6, 1.0, 2.1), 14);

  add("diamond", diamond(), 21);
  {
    std::vector<Position> pos{{0, 0}, {1, 1}, {1, -1}, {2, 1}, {2, -1}, {3, 0}};
    add("double_diamond", ConnectivityGraph(pos, {5}, 1.5, 4), 22);
  }
  {
    // Diamond with a sink on each side.
    std::vector<Position> pos{{0, 0}, {1, 1}, {1, -1}, {2, 0}, {-1, 0}};
    add("diamond_two_sinks", ConnectivityGraph(pos, {3, 4}, 1.5, 4), 23);
  }

  add("grid2x2", build_grid(2, 2, 2.0, 1.5, {3}), 31);
  add("grid3x3", build_grid(3, 3, 3.0, 1.2, {8}), 32);
  add("grid3x3_diag", build_grid(3, 3, 3.0, 1.5, default_grid_sinks(3, 3)), 33);
  add("grid4x4", build_grid(4, 4, 4.0, 1.2, {0, 15}), 34);
  add("grid4x4_dense", build_grid(4, 4, 4.0, 2.1, {5}), 35);
  add("grid5x5", build_grid(5, 5, 5.0, 1.2, default_grid_sinks(5, 5)), 36);
  add("grid5x5_diag", build_grid(5, 5, 5.0, 1.5, {24}), 37);
  add("grid5x5_heavy", build_grid(5, 5, 5.0, 1.5, {0, 12}), 38, 0.6);

  add("random8", build_random(8, 5.0, 2.5, 1, 41), 41);
  add("random10", build_random(10, 6.0, 2.5, 2, 42), 42);
  add("random12", build_random(12, 6.0, 2.5, 2, 43), 43);
  add("random15", build_random(15, 8.0, 3.0, 3, 44), 44);
  add("random18", build_random(18, 8.0, 2.5, 2, 45), 45);
  add("random20", build_random(20, 10.0, 3.0, 3, 46), 46);
  add("random25", build_random(25, 10.0, 3.0, 5, 47), 47);
  add("random25_sparse", build_random(25, 12.0, 2.5, 2, 48), 48, 0.0);
  return out;
}

reliability::RouteSet all_progress_paths(const ConnectivityGraph& g, NodeId i, SinkId k) {
  auto d2 = [&](NodeId a) {
    const double dx = g.position(a).x - g.position(k).x;
    const double dy = g.position(a).y - g.position(k).y;
    return dx * dx + dy * dy;
  };
  reliability::RouteSet done;
  std::deque<reliability::Route> queue{{i}};
  while (!queue.empty()) {
    auto path = std::move(queue.front());
    queue.pop_front();
    const NodeId at = path.back();
    if (at == k) {
      bool ok = true;
      for (std::size_t h = 1; h < path.size(); ++h) ok = ok && d2(path[h]) < d2(path[h - 1]);
      if (ok) done.push_back(path);
      continue;
    }
    for (const auto& l : g.links()) {
      if (l.from != at) continue;
      if (std::find(path.begin(), path.end(), l.to) != path.end()) continue;
      auto next = path;
      next.push_back(l.to);
      queue.push_back(std::move(next));
    }
  }
  std::sort(done.begin(), done.end());
  return done;
}

double exhaustive_delivery_prob(const ConnectivityGraph& g, NodeId i, SinkId k,
                                const reliability::LinkProbMap& probs) {
  double none = 1.0;
  for (const auto& r : all_progress_paths(g, i, k)) {
    double p = 1.0;
    for (std::size_t h = 1; h < r.size(); ++h) {
      for (std::size_t idx = 0; idx < g.links().size(); ++idx) {
        if (g.links()[idx].from == r[h - 1] && g.links()[idx].to == r[h]) p *= probs[idx].p;
      }
    }
    none *= 1.0 - p;
  }
  return 1.0 - none;
}

}  // namespace vlroute::fixtures
