#include "vlroute/routing_state.hpp"

#include <algorithm>

#include "vlroute/rng.hpp"

namespace vlroute::routing {

LinkEstimate estimate_link_prob(double true_p_error, double true_p_blockage, const EstimationModel& model,
                                NodeId from, NodeId to) {
  if (model.relative_error < 0.0) throw std::invalid_argument("relative_error must be >= 0");
  auto perturb = [&](double p, std::uint64_t component) {
    if (model.relative_error == 0.0) return p;
    RngStream rng(model.seed, StreamPurpose::Estimation, {from, to, component});
    const double u = rng.uniform(-1.0, 1.0);
    return std::clamp(p * (1.0 + model.relative_error * u), 0.0, 1.0);
  };
  return {perturb(true_p_error, 0), perturb(true_p_blockage, 1)};
}

double compute_beta(int backlog_for_k, int b_max) { return reliability::backlog_penalty(backlog_for_k, b_max); }

RoutingState::RoutingState(NodeId self, Position self_position, std::span<const SinkId> sinks,
                           std::span<const Position> sink_positions, Params params)
    : self_(self),
      pos_(self_position),
      sinks_(sinks.begin(), sinks.end()),
      sink_pos_(sink_positions.begin(), sink_positions.end()),
      params_(params),
      backlogs_(sinks.size(), 0),
      sector_counts_(static_cast<std::size_t>(params.n_sectors), 0),
      max_via_(sinks.size(), 0.0) {
  if (sinks_.size() != sink_pos_.size()) throw std::invalid_argument("sink/position size mismatch");
  entries_.reserve(sinks_.size());
  for (std::size_t k = 0; k < sinks_.size(); ++k) {
    SinkTableEntry e{sinks_[k], 0.0, kInfiniteHops};
    if (sinks_[k] == self_) e = {sinks_[k], 1.0, 0};
    entries_.push_back(e);
    self_to_sink_.push_back(distance(pos_, sink_pos_[k]));
  }
}

const NeighborObservation* RoutingState::neighbor(NodeId id) const {
  auto it = std::lower_bound(neighbors_.begin(), neighbors_.end(), id,
                             [](const NeighborObservation& o, NodeId v) { return o.neighbor < v; });
  if (it == neighbors_.end() || it->neighbor != id) return nullptr;
  return &*it;
}

bool RoutingState::update_on_control(const NeighborObservation& obs) {
  bool changed = false;
  auto it = std::lower_bound(neighbors_.begin(), neighbors_.end(), obs.neighbor,
                             [](const NeighborObservation& o, NodeId v) { return o.neighbor < v; });
  if (it == neighbors_.end() || it->neighbor != obs.neighbor) {
    it = neighbors_.insert(it, obs);
    it->sector = sector_of(pos_, obs.position, params_.n_sectors);
    ++sector_counts_[static_cast<std::size_t>(it->sector.index)];
    changed = true;
  } else {
    const Sector s = it->sector;
    *it = obs;
    it->sector = s;
  }
  it->link_prob = estimated_link_prob(*it);
  for (std::size_t k = 0; k < sinks_.size(); ++k) changed |= recompute(k);
  for (std::size_t k = 0; k < sinks_.size(); ++k) {
    max_via_[k] = 0.0;
    for (const auto& nb : neighbors_) max_via_[k] = std::max(max_via_[k], via_score(nb, k));
  }
  if (changed) ++version_;
  return changed;
}

bool RoutingState::set_backlog(std::size_t sink_idx, int backlog) {
  if (backlog < 0 || backlog > params_.b_max) throw std::invalid_argument("backlog outside [0, b_max]");
  if (backlogs_.at(sink_idx) == backlog) return false;
  backlogs_[sink_idx] = backlog;
  const bool changed = recompute(sink_idx);
  if (changed) ++version_;
  return changed;
}

bool RoutingState::forward(const NeighborObservation& obs, std::size_t sink_idx) const {
  return distance(obs.position, sink_pos_[sink_idx]) < self_to_sink_[sink_idx];
}

double RoutingState::estimated_link_prob(const NeighborObservation& obs) const {
  const Sector back = sector_of(obs.position, pos_, params_.n_sectors);
  int m = 1;
  if (static_cast<std::size_t>(back.index) < obs.sector_counts.size()) {
    m = std::max(1, obs.sector_counts[static_cast<std::size_t>(back.index)]);
  }
  return reliability::link_success_prob(obs.est_p_error, reliability::access_prob(params_.cw, m),
                                        obs.est_p_blockage)
      .p;
}

bool RoutingState::recompute(std::size_t k) {
  if (sinks_[k] == self_) return false;
  int best_hops = kInfiniteHops;
  for (const auto& nb : neighbors_) {
    const int h = nb.entries[k].mhc;
    if (h == kInfiniteHops || !forward(nb, k)) continue;
    best_hops = std::min(best_hops, h);
  }
  SinkTableEntry next{sinks_[k], 0.0, kInfiniteHops};
  if (best_hops != kInfiniteHops) {
    next.mhc = best_hops + 1;
    std::vector<double> fail(static_cast<std::size_t>(params_.n_sectors), 1.0);
    for (const auto& nb : neighbors_) {
      if (!forward(nb, k) || nb.entries[k].mhc >= next.mhc) continue;
      fail[static_cast<std::size_t>(nb.sector.index)] *= 1.0 - nb.link_prob * nb.entries[k].rrs;
    }
    double best = 0.0;
    for (double f : fail) best = std::max(best, 1.0 - f);
    next.rrs = compute_beta(backlogs_[k], params_.b_max) * best;
  }
  if (next == entries_[k]) return false;
  entries_[k] = next;
  return true;
}

Advert RoutingState::advert() const {
  return Advert{self_, pos_, version_, entries_, sector_counts_};
}

double RoutingState::max_neighbor_rrs(std::size_t sink_idx) const {
  double m = 0.0;
  for (const auto& nb : neighbors_) m = std::max(m, nb.entries[sink_idx].rrs);
  return m;
}

double RoutingState::via_score(const NeighborObservation& obs, std::size_t sink_idx) const {
  return obs.link_prob * obs.entries.at(sink_idx).rrs;
}

double RoutingState::max_via_score(std::size_t sink_idx) const { return max_via_.at(sink_idx); }

}  // namespace vlroute::routing
