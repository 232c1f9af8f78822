#include "vlroute/topology.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "vlroute/rng.hpp"

namespace vlroute {

namespace {

void check_probability(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(std::string(what) + " must lie in [0,1]");
}

}  // namespace

ConnectivityGraph::ConnectivityGraph(std::vector<Position> positions, std::vector<NodeId> sinks,
                                     double range, int n_sectors)
    : positions_(std::move(positions)), range_(range), n_sectors_(n_sectors) {
  if (range <= 0.0) throw std::invalid_argument("range must be positive");
  if (n_sectors < 1) throw std::invalid_argument("n_sectors must be >= 1");
  for (const auto& p : positions_) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw std::invalid_argument("non-finite position");
  }

  const auto n = positions_.size();
  neighbors_.assign(n, {});
  out_links_.assign(n, {});
  sector_neighbors_.assign(n, std::vector<std::vector<NodeId>>(static_cast<std::size_t>(n_sectors)));

  for (NodeId i = 0; i < n; ++i) {
    for (NodeId j = 0; j < n; ++j) {
      if (i == j) continue;
      if (distance(positions_[i], positions_[j]) > range_) continue;
      DirectedLink l;
      l.from = i;
      l.to = j;
      l.sector_at_from = sector_of(positions_[i], positions_[j], n_sectors);
      l.sector_at_to = sector_of(positions_[j], positions_[i], n_sectors);
      out_links_[i].push_back(static_cast<LinkIndex>(links_.size()));
      neighbors_[i].push_back(j);
      sector_neighbors_[i][static_cast<std::size_t>(l.sector_at_from.index)].push_back(j);
      links_.push_back(l);
    }
  }
  set_sinks(std::move(sinks));
}

void ConnectivityGraph::set_sinks(std::vector<NodeId> sinks) {
  for (auto s : sinks) {
    if (s >= positions_.size()) throw std::invalid_argument("sink id out of range");
  }
  std::vector<NodeId> sorted = sinks;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw std::invalid_argument("duplicate sink id");
  }
  sinks_ = std::move(sinks);
}

bool ConnectivityGraph::is_sink(NodeId n) const { return sink_index(n).has_value(); }

std::optional<std::size_t> ConnectivityGraph::sink_index(NodeId n) const {
  for (std::size_t i = 0; i < sinks_.size(); ++i) {
    if (sinks_[i] == n) return i;
  }
  return std::nullopt;
}

std::optional<ConnectivityGraph::LinkIndex> ConnectivityGraph::find_link(NodeId from, NodeId to) const {
  if (from >= neighbors_.size()) return std::nullopt;
  const auto& nb = neighbors_[from];
  auto it = std::lower_bound(nb.begin(), nb.end(), to);
  if (it == nb.end() || *it != to) return std::nullopt;
  return out_links_[from][static_cast<std::size_t>(it - nb.begin())];
}

ConnectivityGraph build_grid(int rows, int cols, double area_side, double range,
                             std::vector<NodeId> sinks, int n_sectors) {
  if (rows < 1 || cols < 1) throw std::invalid_argument("grid needs rows, cols >= 1");
  if (area_side <= 0.0) throw std::invalid_argument("area_side must be positive");
  const double pitch_x = area_side / cols;
  const double pitch_y = area_side / rows;
  std::vector<Position> pos;
  pos.reserve(static_cast<std::size_t>(rows * cols));
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      pos.push_back({(c + 0.5) * pitch_x, (r + 0.5) * pitch_y});
    }
  }
  return ConnectivityGraph(std::move(pos), std::move(sinks), range, n_sectors);
}

std::vector<NodeId> default_grid_sinks(int rows, int cols) {
  auto id = [cols](int r, int c) { return static_cast<NodeId>(r * cols + c); };
  std::vector<NodeId> s{id(0, 0), id(0, cols - 1), id(rows - 1, 0), id(rows - 1, cols - 1),
                        id(rows / 2, cols / 2)};
  std::vector<NodeId> out;
  for (auto v : s) {
    if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
  }
  return out;
}

ConnectivityGraph build_random(int n, double area_side, double range, int n_sinks,
                               std::uint64_t seed, int n_sectors) {
  if (n_sinks < 1 || n < n_sinks) throw std::invalid_argument("need n >= n_sinks >= 1");
  RngStream rng(seed, StreamPurpose::Topology);
  std::vector<Position> pos;
  pos.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double x = rng.uniform(0.0, area_side);
    const double y = rng.uniform(0.0, area_side);
    pos.push_back({x, y});
  }
  std::vector<NodeId> sinks;
  for (int i = 0; i < n_sinks; ++i) sinks.push_back(static_cast<NodeId>(i));
  return ConnectivityGraph(std::move(pos), std::move(sinks), range, n_sectors);
}

void assign_link_errors(ConnectivityGraph& g, double mean, double spread, std::uint64_t seed) {
  check_probability(mean, "error mean");
  for (auto& l : g.mutable_links()) {
    RngStream rng(seed, StreamPurpose::LinkError, {l.from, l.to});
    l.p_error = std::clamp(mean + spread * rng.uniform(-1.0, 1.0), 0.0, 1.0);
  }
}

void assign_blockage(ConnectivityGraph& g, double severe_fraction, double p_severe, double p_mild,
                     std::uint64_t seed) {
  check_probability(severe_fraction, "severe_fraction");
  check_probability(p_severe, "p_severe");
  check_probability(p_mild, "p_mild");
  for (auto& l : g.mutable_links()) {
    const auto lo = std::min(l.from, l.to);
    const auto hi = std::max(l.from, l.to);
    RngStream rng(seed, StreamPurpose::Blockage, {lo, hi});
    const bool severe = rng.uniform() < severe_fraction;
    l.p_blockage = severe ? p_severe : p_mild;
  }
}

std::string graph_to_json(const ConnectivityGraph& g) {
  nlohmann::json j;
  j["format"] = "vlroute-graph/1";
  j["range"] = g.range();
  j["n_sectors"] = g.n_sectors();
  auto& nodes = j["nodes"] = nlohmann::json::array();
  for (NodeId i = 0; i < g.node_count(); ++i) {
    nodes.push_back({{"id", i}, {"x", g.position(i).x}, {"y", g.position(i).y}});
  }
  j["sinks"] = std::vector<NodeId>(g.sinks().begin(), g.sinks().end());
  auto& links = j["links"] = nlohmann::json::array();
  for (const auto& l : g.links()) {
    links.push_back({{"from", l.from},
                     {"to", l.to},
                     {"p_error", l.p_error},
                     {"p_blockage", l.p_blockage},
                     {"capacity_bps", l.capacity_bps}});
  }
  return j.dump(1);
}

ConnectivityGraph graph_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  if (j.value("format", "") != "vlroute-graph/1") throw std::invalid_argument("unknown graph format");
  std::vector<Position> pos;
  for (const auto& n : j.at("nodes")) {
    if (n.at("id").get<NodeId>() != pos.size()) throw std::invalid_argument("node ids must be dense and ordered");
    pos.push_back({n.at("x").get<double>(), n.at("y").get<double>()});
  }
  ConnectivityGraph g(std::move(pos), j.at("sinks").get<std::vector<NodeId>>(), j.at("range").get<double>(),
                      j.at("n_sectors").get<int>());
  std::size_t seen = 0;
  for (const auto& l : j.at("links")) {
    const auto idx = g.find_link(l.at("from").get<NodeId>(), l.at("to").get<NodeId>());
    if (!idx) throw std::invalid_argument("link in file is not feasible for the stored range");
    auto& link = g.mutable_links()[*idx];
    link.p_error = l.at("p_error").get<double>();
    link.p_blockage = l.at("p_blockage").get<double>();
    link.capacity_bps = l.at("capacity_bps").get<double>();
    check_probability(link.p_error, "p_error");
    check_probability(link.p_blockage, "p_blockage");
    ++seen;
  }
  if (seen != g.links().size()) throw std::invalid_argument("graph file is missing links");
  return g;
}

}  // namespace vlroute
