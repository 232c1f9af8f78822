#include "vlroute/engine.hpp"

#include <algorithm>
#include <chrono>
#include <deque>
#include <memory>
#include <queue>
#include <stdexcept>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "vlroute/mac.hpp"
#include "vlroute/routing_state.hpp"

namespace vlroute {

std::string_view to_string(Protocol p) {
  switch (p) {
    case Protocol::VlRoute: return "VL-ROUTE";
    case Protocol::VlMacGeo: return "VL-MAC-GEO";
    case Protocol::GrCsma: return "GR-CSMA";
  }
  return "?";
}

std::optional<Protocol> parse_protocol(std::string_view s) {
  std::string t(s);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) {
    return c == '_' ? '-' : static_cast<char>(std::toupper(c));
  });
  if (t == "VL-ROUTE" || t == "VLROUTE") return Protocol::VlRoute;
  if (t == "VL-MAC-GEO" || t == "VL-MAC" || t == "GEO") return Protocol::VlMacGeo;
  if (t == "GR-CSMA" || t == "CSMA") return Protocol::GrCsma;
  return std::nullopt;
}

std::string_view to_string(DropCause c) {
  switch (c) {
    case DropCause::Collision: return "collision";
    case DropCause::RetryLimit: return "retry-limit";
    case DropCause::NoRoute: return "no-route";
    case DropCause::BufferOverflow: return "buffer-overflow";
  }
  return "?";
}

std::string_view to_string(TraceKind k) {
  switch (k) {
    case TraceKind::Control: return "CTRL";
    case TraceKind::Mode: return "MODE";
    case TraceKind::ExchangeStart: return "XSTART";
    case TraceKind::ExchangeEnd: return "XEND";
    case TraceKind::Delivered: return "DELIVER";
    case TraceKind::Dropped: return "DROP";
    case TraceKind::Warmup: return "WARMUP";
  }
  return "?";
}

void ScenarioConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
  };
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  need(topology.rows >= 1 && topology.cols >= 1, "topology rows/cols must be >= 1");
  need(topology.n_nodes >= 1, "topology n_nodes must be >= 1");
  need(topology.n_sinks >= 1, "topology n_sinks must be >= 1");
  need(topology.area_side > 0 && topology.range > 0, "area_side and range must be > 0");
  need(topology.n_sectors >= 1, "n_sectors must be >= 1");
  need(sessions >= 0, "sessions must be >= 0");
  need(data_bytes > 0 && control_bytes > 0 && ack_bytes > 0, "packet sizes must be > 0");
  need(link_rate_bps > 0, "link rate must be > 0");
  need(cw >= 1 && acn_window >= 1, "contention windows must be >= 1");
  need(cms_per_slot >= cw + acn_window + 1, "cms_per_slot must fit ART, ACN and RES phases");
  need(b_max >= 1, "b_max must be >= 1");
  need(retry_limit >= 0, "retry_limit must be >= 0");
  need(csma_cw_max >= 1, "csma_cw_max must be >= 1");
  need(backoff_u_ref > 0, "backoff_u_ref must be > 0");
  need(prob(p_error_mean) && p_error_spread >= 0, "bad link error parameters");
  need(prob(severe_fraction) && prob(p_severe) && prob(p_mild), "blockage parameters must be probabilities");
  need(estimation_error >= 0, "estimation_error must be >= 0");
  need(duration_cap_s > 0, "duration cap must be > 0");
  need(warmup_max_superslots >= 0, "warmup_max_superslots must be >= 0");
}

std::uint64_t RunMetrics::dropped() const {
  std::uint64_t d = 0;
  for (auto x : drops) d += x;
  return d;
}

std::string metrics_to_json(const RunMetrics& m) {
  nlohmann::json j;
  j["protocol"] = std::string(to_string(m.protocol));
  j["seed"] = m.seed;
  j["generated"] = m.generated;
  j["delivered"] = m.delivered;
  j["in_flight"] = m.in_flight;
  j["delivered_per_session"] = m.delivered_per_session;
  auto& drops = j["drops"] = nlohmann::json::object();
  for (std::size_t c = 0; c < kDropCauses; ++c) drops[std::string(to_string(static_cast<DropCause>(c)))] = m.drops[c];
  j["delivered_bits"] = m.delivered_bits;
  j["normalized_throughput"] = m.normalized_throughput;
  j["exchanges"] = m.exchanges;
  j["duplex_exchanges"] = m.duplex_exchanges;
  j["duplex_ratio"] = m.duplex_ratio;
  j["occupancy_conflicts"] = m.occupancy_conflicts;
  j["control_packets"] = m.control_packets;
  j["warmup_superslots"] = m.warmup_superslots;
  j["warmup_converged"] = m.warmup_converged;
  j["traffic_start_us"] = m.traffic_start.ticks;
  j["end_time_us"] = m.end_time.ticks;
  j["hit_duration_cap"] = m.hit_duration_cap;
  j["trace_hash"] = m.trace_hash;
  j["trace_records"] = m.trace_records;
  j["wall_seconds"] = m.wall_seconds;
  auto& snap = j["routing_snapshot"] = nlohmann::json::array();
  for (const auto& r : m.routing_snapshot) {
    snap.push_back({{"node", r.node}, {"sink", r.sink}, {"rrs", r.rrs}, {"hops", r.hops}});
  }
  return j.dump(2);
}

LinkOutcome sample_link_outcome(const DirectedLink& link, RngStream& rng) {
  if (rng.bernoulli(link.p_blockage)) return LinkOutcome::LostBlockage;
  if (rng.bernoulli(link.p_error)) return LinkOutcome::LostError;
  return LinkOutcome::Delivered;
}

SuperslotClock::SuperslotClock(int n_sectors, SimTime sector_slot) : n_(n_sectors), slot_(sector_slot) {
  if (n_sectors < 1 || sector_slot.ticks <= 0) throw std::invalid_argument("SuperslotClock: durations must be positive");
}

std::vector<Session> generate_sessions(const ConnectivityGraph& g, int count, std::uint32_t packets,
                                       std::uint64_t seed) {
  if (count < 0) throw std::invalid_argument("generate_sessions: count must be >= 0");
  std::vector<NodeId> sources;
  for (NodeId n = 0; n < g.node_count(); ++n) {
    if (!g.is_sink(n)) sources.push_back(n);
  }
  const auto sinks = g.sinks();
  std::vector<Session> out;
  if (count == 0) return out;
  if (sources.empty() || sinks.empty()) throw std::invalid_argument("generate_sessions: need sources and sinks");
  if (static_cast<std::size_t>(count) > sources.size() * sinks.size()) {
    throw std::invalid_argument("generate_sessions: more sessions than distinct source-sink pairs");
  }
  RngStream rng(seed, StreamPurpose::Sessions);
  while (out.size() < static_cast<std::size_t>(count)) {
    const NodeId src = sources[rng.below(sources.size())];
    const SinkId dst = sinks[rng.below(sinks.size())];
    const bool used = std::any_of(out.begin(), out.end(), [&](const Session& s) {
      return s.source == src && s.sink == dst;
    });
    if (used) continue;
    out.push_back(Session{static_cast<SessionId>(out.size()), src, dst, packets, 2500});
  }
  return out;
}

// ---------------------------------------------------------------------------

OccupancyChecker::OccupancyChecker(const ConnectivityGraph& g)
    : g_(&g), facing_emitters_(g.node_count() * static_cast<std::size_t>(g.n_sectors()), 0) {}

void OccupancyChecker::mark(const Activity& a, int delta) {
  if (!a.emitting) return;
  for (auto li : g_->out_links(a.node)) {
    const auto& l = g_->link(li);
    if (l.sector_at_from != a.facing) continue;
    facing_emitters_[l.to * static_cast<std::size_t>(g_->n_sectors()) + static_cast<std::size_t>(l.sector_at_to.index)] +=
        delta;
  }
}

bool OccupancyChecker::faces(NodeId a, Sector facing, NodeId b) const {
  if (a == b) return false;
  const auto li = g_->find_link(a, b);
  return li && g_->link(*li).sector_at_from == facing;
}

OccupancyChecker::Handle OccupancyChecker::add(const Activity& a) {
  Activity mine = a;
  mine.interfered = false;
  for (auto& s : slots_) {
    if (!s.live || s.act.exchange == a.exchange) continue;
    auto& other = s.act;
    if (!(mine.emitting || other.emitting)) continue;
    if (!faces(mine.node, mine.facing, other.node) || !faces(other.node, other.facing, mine.node)) continue;
    ++conflicts_;
    if (other.emitting) mine.interfered = true;
    if (mine.emitting) other.interfered = true;
  }
  Handle h;
  if (!free_.empty()) {
    h = free_.back();
    free_.pop_back();
  } else {
    h = slots_.size();
    slots_.emplace_back();
  }
  slots_[h] = Slot{mine, true};
  mark(mine, 1);
  ++active_;
  return h;
}

void OccupancyChecker::remove(Handle h) {
  auto& s = slots_.at(h);
  if (!s.live) throw std::logic_error("OccupancyChecker: double remove");
  s.live = false;
  mark(s.act, -1);
  free_.push_back(h);
  --active_;
}

bool OccupancyChecker::busy(NodeId observer, Sector s) const {
  return facing_emitters_[observer * static_cast<std::size_t>(g_->n_sectors()) + static_cast<std::size_t>(s.index)] > 0;
}

void Trace::mix(const void* p, std::size_t n) {
  const auto* b = static_cast<const unsigned char*>(p);
  for (std::size_t i = 0; i < n; ++i) {
    hash_ ^= b[i];
    hash_ *= 0x100000001b3ULL;
  }
}

void Trace::record(SimTime t, NodeId node, TraceKind kind, std::int64_t a, std::int64_t b) {
  mix(&t.ticks, sizeof t.ticks);
  mix(&node, sizeof node);
  mix(&kind, sizeof kind);
  mix(&a, sizeof a);
  mix(&b, sizeof b);
  ++count_;
  if (keep_) recs_.push_back({t.ticks, node, kind, a, b});
}

void Trace::write(std::ostream& os) const {
  for (const auto& r : recs_) {
    os << r.t << ' ' << r.node << ' ' << to_string(r.kind) << ' ' << r.a << ' ' << r.b << '\n';
  }
}

ConnectivityGraph build_topology(const ScenarioConfig& cfg) {
  const auto& t = cfg.topology;
  ConnectivityGraph g;
  if (t.kind == TopologyKind::Grid) {
    auto sinks = t.sinks.empty() ? default_grid_sinks(t.rows, t.cols) : t.sinks;
    g = build_grid(t.rows, t.cols, t.area_side, t.range, std::move(sinks), t.n_sectors);
  } else {
    g = build_random(t.n_nodes, t.area_side, t.range, t.n_sinks, cfg.graph_seed(), t.n_sectors);
  }
  assign_link_errors(g, cfg.p_error_mean, cfg.p_error_spread, cfg.graph_seed());
  assign_blockage(g, cfg.severe_fraction, cfg.p_severe, cfg.p_mild, cfg.graph_seed());
  return g;
}

// ---------------------------------------------------------------------------

namespace {

enum class EvKind : std::uint8_t { ExchangeEnd = 0, CtrlRxResolve = 1, MacTimer = 2, SlotBoundary = 3, CtrlTx = 4 };

struct Event {
  SimTime t;
  EvKind kind;
  NodeId target;
  std::uint64_t seq;
  std::uint64_t payload;
};

struct EventLater {
  bool operator()(const Event& a, const Event& b) const {
    if (a.t != b.t) return a.t > b.t;
    if (a.kind != b.kind) return a.kind > b.kind;
    if (a.target != b.target) return a.target > b.target;
    return a.seq > b.seq;
  }
};

struct PacketRec {
  SessionId session = 0;
  std::uint32_t attempts = 0;
  std::uint64_t seq = 0;
};

struct Arrival {
  std::shared_ptr<const mac::ControlPacket> pkt;
  bool ok = false;
};

struct PendingTx {
  std::shared_ptr<const mac::ControlPacket> pkt;
  Sector sector;
};

struct Exchange {
  NodeId init = kNoNode;
  NodeId acc = kNoNode;
  bool joined = false;
  std::optional<SessionId> fwd;
  std::optional<SessionId> rev;
  OccupancyChecker::Handle hi = 0;
  OccupancyChecker::Handle ha = 0;
};

enum class Phase { Warmup, Traffic, Done };

class Simulator;

class NodeEnv final : public mac::MacEnv {
 public:
  NodeEnv(Simulator& sim, NodeId id) : sim_(&sim), id_(id) {}
  NodeId self() const override { return id_; }
  const mac::MacTiming& timing() const override;
  bool has_backlog() const override;
  bool dc_busy(Sector s) const override;
  std::uint64_t draw() override;
  std::span<const double> sector_utilities() override;
  mac::ControlPacket make_art() override;
  mac::AcceptorCandidate evaluate_art(const mac::ControlPacket& art) override;
  std::shared_ptr<const routing::Advert> advert() override;
  SimTime reservation_end() const override;
  std::optional<CsmaTarget> csma_target() override;
  std::optional<SessionId> csma_reverse_session(NodeId toward) override;

 private:
  Simulator* sim_;
  NodeId id_;
};

struct Node {
  mac::MacState mac;
  std::vector<std::deque<PacketRec>> queues;  // indexed by session id
  int total = 0;
  std::vector<int> per_sink;
  std::optional<routing::RoutingState> rs;
  RngStream rng;
  RngStream beacon_rng;
  std::vector<double> utils;
  bool utils_dirty = true;
  std::vector<Arrival> arrivals;
  Sector rx_sector;
  SimTime rx_started;
  std::shared_ptr<const routing::Advert> advert;
  std::uint64_t advert_version = ~std::uint64_t{0};
  std::vector<SessionId> sourced;
};

class Simulator {
 public:
  Simulator(const ScenarioConfig& cfg, const ConnectivityGraph& g, const RunOptions& opts)
      : cfg_(cfg),
        g_(g),
        opts_(opts),
        clock_(g.n_sectors(), cfg.sector_slot()),
        cms_(cfg.cms_duration()),
        occ_(g),
        trace_(cfg.keep_trace || opts.trace_out != nullptr) {
    timing_.art_window = cfg.cw;
    timing_.acn_window = cfg.acn_window;
    timing_.cms_per_slot = cfg.cms_per_slot;
    timing_.backoff_u_ref = cfg.backoff_u_ref;
    timing_.csma_cw_max = cfg.csma_cw_max;
  }

  RunMetrics run();

  // Accessors for NodeEnv.
  const ScenarioConfig& cfg() const { return cfg_; }
  const ConnectivityGraph& graph() const { return g_; }
  const mac::MacTiming& timing() const { return timing_; }
  Node& node(NodeId n) { return nodes_[n]; }
  const Node& node(NodeId n) const { return nodes_[n]; }
  const OccupancyChecker& occupancy() const { return occ_; }
  SimTime slot_base() const { return slot_base_; }
  std::size_t sink_idx_of(SessionId q) const { return session_sink_idx_[q]; }
  const Session& session(SessionId q) const { return sessions_[q]; }
  std::size_t session_count() const { return sessions_.size(); }
  std::optional<NodeId> greedy(NodeId n, std::size_t k) const { return greedy_[n][k]; }
  const routing::LinkEstimate& estimate(std::size_t link) const { return estimates_[link]; }
  std::optional<SessionId> oldest_session(NodeId n) const;

 private:
  void setup();
  void schedule(SimTime t, EvKind kind, NodeId target, std::uint64_t payload = 0);
  void dispatch(const Event& e);
  void on_slot_boundary();
  void on_ctrl_tx(NodeId x, std::uint64_t payload);
  void on_ctrl_rx(NodeId r);
  void on_exchange_end(std::uint64_t id);
  void step(NodeId n, const mac::MacEvent& ev);
  void apply(NodeId n, mac::MacActions& acts);
  void assemble_exchanges();
  void start_traffic();
  bool warmup_converged() const;
  void observe(NodeId r, const routing::Advert& adv);
  std::optional<Sector> listening(NodeId r) const;
  void push_packet(NodeId n, SessionId q, std::uint32_t attempts);
  void pop_packet(NodeId n, SessionId q);
  void node_changed(NodeId n);
  void refill(NodeId n);
  void fail_packet(NodeId n, SessionId q, bool collided);
  void forward_packet(NodeId from, NodeId to, SessionId q);
  void drop(NodeId at, DropCause cause, std::uint64_t count = 1);
  bool no_route_at(NodeId n, SessionId q) const;
  void check_done();
  void finalize(RunMetrics& m);

  const ScenarioConfig& cfg_;
  const ConnectivityGraph& g_;
  RunOptions opts_;
  SuperslotClock clock_;
  SimTime cms_;
  mac::MacTiming timing_;
  OccupancyChecker occ_;
  Trace trace_;
  RunMetrics m_;

  std::priority_queue<Event, std::vector<Event>, EventLater> queue_;
  std::uint64_t seq_ = 0;
  SimTime now_;
  SimTime slot_base_;
  Phase phase_ = Phase::Warmup;
  int superslots_ = 0;

  std::vector<Node> nodes_;
  std::vector<NodeEnv> envs_;
  std::vector<Session> sessions_;
  std::vector<std::size_t> session_sink_idx_;
  std::vector<std::uint32_t> remaining_;
  std::uint64_t total_packets_ = 0;
  std::uint64_t resolved_ = 0;
  std::uint64_t packet_seq_ = 0;

  std::vector<RngStream> ctrl_rng_;
  std::vector<RngStream> data_rng_;
  std::vector<routing::LinkEstimate> estimates_;
  std::vector<std::vector<std::optional<NodeId>>> greedy_;
  std::vector<std::vector<char>> has_forward_;

  std::unordered_map<std::uint64_t, PendingTx> pending_tx_;
  std::uint64_t next_tx_ = 0;
  std::unordered_map<std::uint64_t, Exchange> exchanges_;
  std::uint64_t next_exchange_ = 0;
  std::vector<std::pair<NodeId, mac::CommitExchange>> commits_;
  SimTime last_resolution_;
};

// --- NodeEnv ---------------------------------------------------------------

const mac::MacTiming& NodeEnv::timing() const { return sim_->timing(); }
bool NodeEnv::has_backlog() const { return sim_->node(id_).total > 0; }
bool NodeEnv::dc_busy(Sector s) const { return sim_->occupancy().busy(id_, s); }
std::uint64_t NodeEnv::draw() { return sim_->node(id_).rng.next_u64(); }

std::span<const double> NodeEnv::sector_utilities() {
  auto& nd = sim_->node(id_);
  if (!nd.utils_dirty) return nd.utils;
  const auto& g = sim_->graph();
  mac::UtilityInputs in;
  in.self = g.position(id_);
  for (SessionId q = 0; q < nd.queues.size(); ++q) {
    if (nd.queues[q].empty()) continue;
    const auto k = sim_->sink_idx_of(q);
    in.sessions.push_back({q, k, g.position(sim_->session(q).sink), static_cast<int>(nd.queues[q].size())});
  }
  if (nd.rs) {
    in.use_rrs = true;
    const auto n_sinks = g.sinks().size();
    in.max_rrs.resize(n_sinks);
    for (std::size_t k = 0; k < n_sinks; ++k) in.max_rrs[k] = nd.rs->max_via_score(k);
    for (const auto& ob : nd.rs->neighbors()) {
      mac::NeighborInfo ni{ob.neighbor, ob.position, ob.sector, {}};
      ni.rrs.reserve(ob.entries.size());
      for (std::size_t k = 0; k < ob.entries.size(); ++k) ni.rrs.push_back(nd.rs->via_score(ob, k));
      in.neighbors.push_back(std::move(ni));
    }
  } else {
    in.use_rrs = false;
    const auto nbs = g.neighbors(id_);
    const auto lis = g.out_links(id_);
    for (std::size_t i = 0; i < nbs.size(); ++i) {
      in.neighbors.push_back({nbs[i], g.position(nbs[i]), g.link(lis[i]).sector_at_from, {}});
    }
  }
  nd.utils = mac::sector_utilities(in, g.n_sectors());
  nd.utils_dirty = false;
  return nd.utils;
}

mac::ControlPacket NodeEnv::make_art() {
  auto& nd = sim_->node(id_);
  mac::ControlPacket p;
  p.kind = PacketKind::Art;
  p.src = id_;
  p.dst = kNoNode;
  p.advert = advert();
  for (SessionId q = 0; q < nd.queues.size(); ++q) {
    if (!nd.queues[q].empty()) p.backlogs.push_back({q, static_cast<int>(nd.queues[q].size())});
  }
  if (nd.rs) {
    const auto n_sinks = sim_->graph().sinks().size();
    p.max_rrs.resize(n_sinks);
    for (std::size_t k = 0; k < n_sinks; ++k) p.max_rrs[k] = nd.rs->max_via_score(k);
  }
  p.buffer_full = nd.total >= sim_->cfg().b_max;
  return p;
}

mac::AcceptorCandidate NodeEnv::evaluate_art(const mac::ControlPacket& art) {
  const auto& g = sim_->graph();
  const auto& me = sim_->node(id_);
  const NodeId i = art.src;
  const Position pi = g.position(i);
  const Position pj = g.position(id_);
  const bool full = me.total >= sim_->cfg().b_max;
  const bool rrs = me.rs.has_value();
  // Link i -> j as the initiator sees it: estimates plus our own contention
  // in the sector facing i.
  double p_ij = 0.0;
  if (rrs) {
    const auto& est = sim_->estimate(*g.find_link(i, id_));
    const Sector back = sector_of(pj, pi, g.n_sectors());
    const int m = std::max(1, me.rs->sector_counts()[static_cast<std::size_t>(back.index)]);
    p_ij = reliability::link_success_prob(est.p_error, reliability::access_prob(sim_->cfg().cw, m), est.p_blockage).p;
  }

  mac::AcceptorCandidate c;
  c.initiator = i;
  c.capacity_ij = g.link(*g.find_link(i, id_)).capacity_bps;
  c.capacity_ji = g.link(*g.find_link(id_, i)).capacity_bps;

  std::vector<mac::EtaTerm> fwd;
  for (const auto& rep : art.backlogs) {
    const auto& sess = sim_->session(rep.session);
    const auto k = sim_->sink_idx_of(rep.session);
    const Position pk = g.position(sess.sink);
    if (!(distance(pj, pk) < distance(pi, pk))) continue;
    const bool is_sink = sess.sink == id_;
    if (full && !is_sink) continue;
    double norm = 1.0;
    if (rrs) {
      const double mine = p_ij * (is_sink ? 1.0 : me.rs->entry(k).rrs);
      norm = k < art.max_rrs.size() ? mac::normalized_rrs(mine, art.max_rrs[k]) : 0.0;
    }
    const int recv = is_sink ? 0 : static_cast<int>(me.queues[rep.session].size());
    fwd.push_back({rep.session, norm, mac::normalized_progress(pi, pj, pk), rep.backlog, recv});
  }
  c.forward = mac::select_session_eta(fwd);

  std::vector<mac::EtaTerm> rev;
  for (SessionId q = 0; q < me.queues.size(); ++q) {
    if (me.queues[q].empty()) continue;
    const auto& sess = sim_->session(q);
    const auto k = sim_->sink_idx_of(q);
    const Position pk = g.position(sess.sink);
    if (!(distance(pi, pk) < distance(pj, pk))) continue;
    const bool to_sink = sess.sink == i;
    if (art.buffer_full && !to_sink) continue;
    double norm = 1.0;
    if (rrs) {
      double theirs = 0.0;
      if (const auto* ob = me.rs->neighbor(i)) theirs = me.rs->via_score(*ob, k);
      norm = mac::normalized_rrs(theirs, me.rs->max_via_score(k));
    }
    int their_backlog = 0;
    for (const auto& rep : art.backlogs) {
      if (rep.session == q) their_backlog = rep.backlog;
    }
    if (to_sink) their_backlog = 0;
    rev.push_back({q, norm, mac::normalized_progress(pj, pi, pk), static_cast<int>(me.queues[q].size()),
                   their_backlog});
  }
  c.reverse = mac::select_session_eta(rev);
  return c;
}

std::shared_ptr<const routing::Advert> NodeEnv::advert() {
  auto& nd = sim_->node(id_);
  if (!nd.rs) return nullptr;
  if (!nd.advert || nd.advert_version != nd.rs->version()) {
    nd.advert = std::make_shared<const routing::Advert>(nd.rs->advert());
    nd.advert_version = nd.rs->version();
  }
  return nd.advert;
}

SimTime NodeEnv::reservation_end() const {
  return sim_->slot_base() + sim_->cfg().sector_slot() + sim_->cfg().exchange_duration();
}

std::optional<mac::MacEnv::CsmaTarget> NodeEnv::csma_target() {
  const auto q = sim_->oldest_session(id_);
  if (!q) return std::nullopt;
  const auto nh = sim_->greedy(id_, sim_->sink_idx_of(*q));
  if (!nh) return std::nullopt;
  const auto& g = sim_->graph();
  CsmaTarget t;
  t.next_hop = *nh;
  t.sector = g.link(*g.find_link(id_, *nh)).sector_at_from;
  t.attempts = static_cast<int>(sim_->node(id_).queues[*q].front().attempts);
  return t;
}

std::optional<SessionId> NodeEnv::csma_reverse_session(NodeId toward) {
  const auto& nd = sim_->node(id_);
  std::optional<SessionId> best;
  std::uint64_t best_seq = 0;
  for (SessionId q = 0; q < nd.queues.size(); ++q) {
    if (nd.queues[q].empty()) continue;
    if (sim_->greedy(id_, sim_->sink_idx_of(q)) != toward) continue;
    const auto s = nd.queues[q].front().seq;
    if (!best || s < best_seq) {
      best = q;
      best_seq = s;
    }
  }
  return best;
}

// --- Simulator -------------------------------------------------------------

std::optional<SessionId> Simulator::oldest_session(NodeId n) const {
  const auto& nd = nodes_[n];
  std::optional<SessionId> best;
  std::uint64_t best_seq = 0;
  for (SessionId q = 0; q < nd.queues.size(); ++q) {
    if (nd.queues[q].empty()) continue;
    const auto s = nd.queues[q].front().seq;
    if (!best || s < best_seq) {
      best = q;
      best_seq = s;
    }
  }
  return best;
}

void Simulator::setup() {
  const auto n = g_.node_count();
  const auto sinks = g_.sinks();
  const auto n_sinks = sinks.size();

  sessions_ = cfg_.explicit_sessions.empty()
                  ? generate_sessions(g_, cfg_.sessions, cfg_.packets_per_session, cfg_.seed)
                  : cfg_.explicit_sessions;
  for (std::size_t q = 0; q < sessions_.size(); ++q) {
    auto& s = sessions_[q];
    if (s.id != q) throw std::invalid_argument("session ids must be 0..n-1 in order");
    if (s.source >= n || !g_.is_sink(s.sink) || s.source == s.sink) {
      throw std::invalid_argument("session endpoints invalid");
    }
    s.payload_bytes = cfg_.data_bytes;
    session_sink_idx_.push_back(*g_.sink_index(s.sink));
    remaining_.push_back(s.packets_total);
    total_packets_ += s.packets_total;
  }

  std::vector<Position> sink_pos;
  for (auto k : sinks) sink_pos.push_back(g_.position(k));

  nodes_.resize(n);
  envs_.reserve(n);
  for (NodeId i = 0; i < n; ++i) {
    auto& nd = nodes_[i];
    nd.queues.resize(sessions_.size());
    nd.per_sink.assign(n_sinks, 0);
    nd.rng = RngStream(cfg_.seed, StreamPurpose::Backoff, {i});
    nd.beacon_rng = RngStream(cfg_.seed, StreamPurpose::Beacon, {i});
    if (cfg_.protocol == Protocol::VlRoute) {
      nd.rs.emplace(i, g_.position(i), sinks, sink_pos,
                    routing::RoutingState::Params{g_.n_sectors(), cfg_.cw, cfg_.b_max});
    }
    envs_.emplace_back(*this, i);
  }
  for (const auto& s : sessions_) nodes_[s.source].sourced.push_back(s.id);

  const auto links = g_.links();
  ctrl_rng_.reserve(links.size());
  data_rng_.reserve(links.size());
  const routing::EstimationModel est{cfg_.estimation_error, cfg_.seed};
  for (const auto& l : links) {
    ctrl_rng_.push_back(RngStream(cfg_.seed, StreamPurpose::ControlChannel, {l.from, l.to}));
    data_rng_.push_back(RngStream(cfg_.seed, StreamPurpose::DataChannel, {l.from, l.to}));
    estimates_.push_back(routing::estimate_link_prob(l.p_error, l.p_blockage, est, l.from, l.to));
  }

  greedy_.assign(n, std::vector<std::optional<NodeId>>(n_sinks));
  has_forward_.assign(n, std::vector<char>(n_sinks, 0));
  for (NodeId i = 0; i < n; ++i) {
    std::vector<mac::NeighborPosition> nbs;
    for (NodeId j : g_.neighbors(i)) nbs.push_back({j, g_.position(j)});
    for (std::size_t k = 0; k < n_sinks; ++k) {
      greedy_[i][k] = mac::greedy_next_hop(g_.position(i), sink_pos[k], nbs);
      has_forward_[i][k] = greedy_[i][k].has_value();
    }
  }
}

void Simulator::schedule(SimTime t, EvKind kind, NodeId target, std::uint64_t payload) {
  if (t < now_) throw std::logic_error("event scheduled in the past");
  queue_.push(Event{t, kind, target, seq_++, payload});
}

std::optional<Sector> Simulator::listening(NodeId r) const {
  const auto& st = nodes_[r].mac;
  switch (st.mode) {
    case mac::MacMode::SIdle: return clock_.listening(now_);
    case mac::MacMode::TrInitiator: return st.ctx.art_pending ? clock_.listening(now_) : st.ctx.sector;
    case mac::MacMode::TrAcceptor: return st.ctx.sector;
    default: return std::nullopt;
  }
}

void Simulator::step(NodeId n, const mac::MacEvent& ev) {
  auto& nd = nodes_[n];
  const auto before = nd.mac.mode;
  auto acts = cfg_.protocol == Protocol::GrCsma ? mac::csma_ca_step(nd.mac, ev, envs_[n])
                                                : mac::vl_handshake_step(nd.mac, ev, envs_[n]);
  if (nd.mac.mode != before) trace_.record(now_, n, TraceKind::Mode, static_cast<std::int64_t>(nd.mac.mode));
  apply(n, acts);
}

void Simulator::apply(NodeId n, mac::MacActions& acts) {
  for (auto& a : acts) {
    if (auto* s = std::get_if<mac::SendControl>(&a)) {
      s->packet.size_bytes = cfg_.control_bytes;
      const auto id = next_tx_++;
      pending_tx_.emplace(id, PendingTx{std::make_shared<const mac::ControlPacket>(std::move(s->packet)), s->sector});
      schedule(slot_base_ + SimTime{s->cms * cms_.ticks}, EvKind::CtrlTx, n, id);
    } else if (auto* t = std::get_if<mac::SetTimer>(&a)) {
      schedule(slot_base_ + SimTime{t->cms * cms_.ticks}, EvKind::MacTimer, n, static_cast<std::uint64_t>(t->tag));
    } else if (auto* c = std::get_if<mac::CommitExchange>(&a)) {
      commits_.emplace_back(n, *c);
    } else if (std::holds_alternative<mac::CsmaFailure>(a)) {
      const auto q = oldest_session(n);
      if (q) fail_packet(n, *q, true);
    }
  }
}

void Simulator::observe(NodeId r, const routing::Advert& adv) {
  auto& nd = nodes_[r];
  if (const auto* prev = nd.rs->neighbor(adv.node); prev && prev->version == adv.version) return;
  const auto li = g_.find_link(r, adv.node);
  if (!li) return;
  routing::NeighborObservation ob;
  ob.neighbor = adv.node;
  ob.position = adv.position;
  ob.entries = adv.entries;
  ob.sector_counts = adv.sector_counts;
  ob.est_p_error = estimates_[*li].p_error;
  ob.est_p_blockage = estimates_[*li].p_blockage;
  ob.last_heard = now_;
  ob.version = adv.version;
  nd.rs->update_on_control(ob);
  nd.utils_dirty = true;
}

void Simulator::on_ctrl_tx(NodeId x, std::uint64_t payload) {
  auto it = pending_tx_.find(payload);
  PendingTx tx = std::move(it->second);
  pending_tx_.erase(it);
  ++m_.control_packets;
  trace_.record(now_, x, TraceKind::Control, static_cast<std::int64_t>(tx.pkt->kind),
                tx.pkt->dst == kNoNode ? -1 : static_cast<std::int64_t>(tx.pkt->dst));
  for (NodeId r : g_.neighbors_in(x, tx.sector)) {
    const auto ls = listening(r);
    if (!ls) continue;
    const auto li = *g_.find_link(x, r);
    const auto& link = g_.link(li);
    if (link.sector_at_to != *ls) continue;
    const bool ok = sample_link_outcome(link, ctrl_rng_[li]) == LinkOutcome::Delivered;
    auto& nd = nodes_[r];
    if (nd.arrivals.empty()) {
      nd.rx_sector = *ls;
      nd.rx_started = now_;
      schedule(now_ + cms_, EvKind::CtrlRxResolve, r);
    }
    nd.arrivals.push_back({tx.pkt, ok});
  }
}

void Simulator::on_ctrl_rx(NodeId r) {
  auto& nd = nodes_[r];
  std::vector<Arrival> arr;
  arr.swap(nd.arrivals);
  const int energy = static_cast<int>(arr.size());
  std::shared_ptr<const mac::ControlPacket> decoded;
  if (energy == 1 && arr[0].ok) decoded = arr[0].pkt;
  if (decoded && decoded->advert && nd.rs) observe(r, *decoded->advert);
  if (phase_ != Phase::Traffic) return;
  const int cms = static_cast<int>((nd.rx_started - slot_base_).ticks / cms_.ticks);
  step(r, mac::ControlHeard{cms, nd.rx_sector, energy, decoded.get()});
}

bool Simulator::warmup_converged() const {
  for (NodeId i = 0; i < g_.node_count(); ++i) {
    for (NodeId j : g_.neighbors(i)) {
      const auto* ob = nodes_[i].rs->neighbor(j);
      if (!ob || ob->version != nodes_[j].rs->version()) return false;
    }
  }
  return true;
}

void Simulator::on_slot_boundary() {
  const SimTime t = now_;
  if (phase_ == Phase::Warmup) {
    if (t.ticks % clock_.period().ticks == 0 && t.ticks > 0) {
      ++superslots_;
      bool stop = false;
      if (cfg_.warmup_fixed_superslots >= 0) {
        stop = superslots_ >= cfg_.warmup_fixed_superslots;
        m_.warmup_converged = warmup_converged();
      } else {
        m_.warmup_converged = warmup_converged();
        stop = m_.warmup_converged || superslots_ >= cfg_.warmup_max_superslots;
      }
      if (stop) {
        trace_.record(t, kNoNode, TraceKind::Warmup, superslots_, m_.warmup_converged);
        m_.warmup_superslots = superslots_;
        if (opts_.warmup_only) {
          phase_ = Phase::Done;
          m_.traffic_start = m_.end_time = t;
          return;
        }
        start_traffic();
        if (phase_ == Phase::Done) return;
      }
    }
    if (phase_ == Phase::Warmup) {
      slot_base_ = t;
      const Sector tx = opposite(clock_.listening(t), g_.n_sectors());
      for (NodeId i = 0; i < g_.node_count(); ++i) {
        auto& nd = nodes_[i];
        mac::ControlPacket b;
        b.kind = PacketKind::Beacon;
        b.src = i;
        b.advert = envs_[i].advert();
        b.size_bytes = cfg_.control_bytes;
        const auto cms = static_cast<std::int64_t>(nd.beacon_rng.below(static_cast<std::uint64_t>(cfg_.cms_per_slot)));
        const auto id = next_tx_++;
        pending_tx_.emplace(id, PendingTx{std::make_shared<const mac::ControlPacket>(std::move(b)), tx});
        schedule(t + SimTime{cms * cms_.ticks}, EvKind::CtrlTx, i, id);
      }
      schedule(t + clock_.sector_slot(), EvKind::SlotBoundary, kNoNode);
      return;
    }
  }

  // Traffic phase: close the previous slot, then open this one.
  for (NodeId i = 0; i < g_.node_count(); ++i) {
    const auto mode = nodes_[i].mac.mode;
    if (mode == mac::MacMode::TrInitiator || mode == mac::MacMode::TrAcceptor) step(i, mac::SlotEnd{});
  }
  slot_base_ = t;
  assemble_exchanges();
  if (phase_ == Phase::Done) return;

  const Sector listen = clock_.listening(t);
  const mac::SlotStart ss{t, listen, opposite(listen, g_.n_sectors())};
  const bool vl = cfg_.protocol != Protocol::GrCsma;
  for (NodeId i = 0; i < g_.node_count(); ++i) {
    const auto& nd = nodes_[i];
    if (nd.mac.mode != mac::MacMode::SIdle || nd.total == 0) continue;
    // Cheap pre-check with the cached utilities; the MAC would return without
    // acting anyway.
    if (vl && !nd.utils_dirty && mac::select_sector(nd.utils) != ss.transmit) continue;
    step(i, ss);
  }
  schedule(t + clock_.sector_slot(), EvKind::SlotBoundary, kNoNode);
}

void Simulator::assemble_exchanges() {
  auto commits = std::move(commits_);
  commits_.clear();
  auto find_acceptor = [&](NodeId acc, NodeId init) -> const mac::CommitExchange* {
    for (const auto& [n, c] : commits) {
      if (n == acc && c.role == mac::Role::Acceptor && c.peer == init) return &c;
    }
    return nullptr;
  };
  std::vector<NodeId> matched;
  for (const auto& [n, c] : commits) {
    if (c.role != mac::Role::Initiator) continue;
    const auto* a = find_acceptor(c.peer, n);
    Exchange ex;
    ex.init = n;
    ex.acc = c.peer;
    ex.joined = a != nullptr;
    ex.fwd = cfg_.protocol == Protocol::GrCsma ? oldest_session(n) : c.send_session;
    if (ex.fwd && nodes_[n].queues[*ex.fwd].empty()) ex.fwd.reset();
    if (a) {
      ex.rev = a->send_session;
      if (ex.rev && nodes_[ex.acc].queues[*ex.rev].empty()) ex.rev.reset();
      matched.push_back(ex.acc);
    }
    const auto id = next_exchange_++;
    ex.hi = occ_.add({n, c.facing, c.emit, id});
    if (a) ex.ha = occ_.add({ex.acc, a->facing, a->emit, id});
    if (ex.joined) {
      ++m_.exchanges;
      if (ex.fwd && ex.rev) ++m_.duplex_exchanges;
    }
    trace_.record(now_, n, TraceKind::ExchangeStart, ex.joined ? static_cast<std::int64_t>(ex.acc) : -1,
                  (ex.fwd ? 1 : 0) + (ex.rev ? 2 : 0));
    exchanges_.emplace(id, ex);
    schedule(now_ + cfg_.exchange_duration(), EvKind::ExchangeEnd, n, id);
  }
  for (const auto& [n, c] : commits) {
    if (c.role == mac::Role::Acceptor && std::find(matched.begin(), matched.end(), n) == matched.end()) {
      step(n, mac::ExchangeDone{});
    }
  }
}

void Simulator::on_exchange_end(std::uint64_t id) {
  auto it = exchanges_.find(id);
  const Exchange ex = it->second;
  exchanges_.erase(it);
  const bool init_hit = occ_.get(ex.hi).interfered;
  const bool acc_hit = ex.joined && occ_.get(ex.ha).interfered;

  bool fwd_ok = false;
  bool rev_ok = false;
  if (ex.fwd && ex.joined && !acc_hit) {
    const auto li = *g_.find_link(ex.init, ex.acc);
    fwd_ok = sample_link_outcome(g_.link(li), data_rng_[li]) == LinkOutcome::Delivered;
  }
  if (ex.rev && !init_hit) {
    const auto li = *g_.find_link(ex.acc, ex.init);
    rev_ok = sample_link_outcome(g_.link(li), data_rng_[li]) == LinkOutcome::Delivered;
  }
  occ_.remove(ex.hi);
  if (ex.joined) occ_.remove(ex.ha);
  trace_.record(now_, ex.init, TraceKind::ExchangeEnd, fwd_ok, rev_ok);

  if (ex.fwd) {
    if (fwd_ok) forward_packet(ex.init, ex.acc, *ex.fwd);
    else fail_packet(ex.init, *ex.fwd, acc_hit);
  }
  if (ex.rev) {
    if (rev_ok) forward_packet(ex.acc, ex.init, *ex.rev);
    else fail_packet(ex.acc, *ex.rev, init_hit);
  }
  if (cfg_.protocol == Protocol::GrCsma) {
    nodes_[ex.init].mac.csma_counter = -1;
    if (ex.joined) nodes_[ex.acc].mac.csma_counter = -1;
  }
  last_resolution_ = now_;
  step(ex.init, mac::ExchangeDone{});
  if (ex.joined) step(ex.acc, mac::ExchangeDone{});
  check_done();
}

void Simulator::push_packet(NodeId n, SessionId q, std::uint32_t attempts) {
  auto& nd = nodes_[n];
  nd.queues[q].push_back({q, attempts, packet_seq_++});
  ++nd.total;
  ++nd.per_sink[session_sink_idx_[q]];
  node_changed(n);
}

void Simulator::pop_packet(NodeId n, SessionId q) {
  auto& nd = nodes_[n];
  nd.queues[q].pop_front();
  --nd.total;
  --nd.per_sink[session_sink_idx_[q]];
  node_changed(n);
  refill(n);
}

void Simulator::node_changed(NodeId n) {
  auto& nd = nodes_[n];
  nd.utils_dirty = true;
  if (nd.rs) {
    for (std::size_t k = 0; k < nd.per_sink.size(); ++k) nd.rs->set_backlog(k, nd.per_sink[k]);
  }
}

void Simulator::refill(NodeId n) {
  if (phase_ != Phase::Traffic) return;
  auto& nd = nodes_[n];
  bool progress = true;
  while (progress) {
    progress = false;
    for (SessionId q : nd.sourced) {
      if (nd.total >= cfg_.b_max) return;
      if (remaining_[q] == 0) continue;
      --remaining_[q];
      ++m_.generated;
      push_packet(n, q, 0);
      progress = true;
    }
  }
}

bool Simulator::no_route_at(NodeId n, SessionId q) const {
  const auto k = session_sink_idx_[q];
  switch (cfg_.protocol) {
    case Protocol::GrCsma: return !greedy_[n][k].has_value();
    case Protocol::VlMacGeo: return !has_forward_[n][k];
    case Protocol::VlRoute: return nodes_[n].rs->entry(k).mhc == routing::kInfiniteHops;
  }
  return false;
}

void Simulator::drop(NodeId at, DropCause cause, std::uint64_t count) {
  m_.drops[static_cast<std::size_t>(cause)] += count;
  resolved_ += count;
  trace_.record(now_, at, TraceKind::Dropped, static_cast<std::int64_t>(cause), static_cast<std::int64_t>(count));
  check_done();
}

void Simulator::fail_packet(NodeId n, SessionId q, bool collided) {
  auto& p = nodes_[n].queues[q].front();
  ++p.attempts;
  if (p.attempts > static_cast<std::uint32_t>(cfg_.retry_limit)) {
    pop_packet(n, q);
    drop(n, collided ? DropCause::Collision : DropCause::RetryLimit);
  }
}

void Simulator::forward_packet(NodeId from, NodeId to, SessionId q) {
  pop_packet(from, q);
  const auto& s = sessions_[q];
  if (to == s.sink) {
    ++m_.delivered;
    ++m_.delivered_per_session[q];
    m_.delivered_bits += static_cast<std::uint64_t>(s.payload_bytes) * 8;
    ++resolved_;
    trace_.record(now_, to, TraceKind::Delivered, q);
    return;
  }
  if (nodes_[to].total >= cfg_.b_max) {
    drop(to, DropCause::BufferOverflow);
    return;
  }
  if (cfg_.protocol != Protocol::VlRoute && no_route_at(to, q)) {
    drop(to, DropCause::NoRoute);
    return;
  }
  push_packet(to, q, 0);
}

void Simulator::start_traffic() {
  phase_ = Phase::Traffic;
  m_.traffic_start = now_;
  last_resolution_ = now_;
  for (const auto& s : sessions_) {
    if (s.packets_total > 0 && no_route_at(s.source, s.id)) {
      m_.generated += remaining_[s.id];
      drop(s.source, DropCause::NoRoute, remaining_[s.id]);
      remaining_[s.id] = 0;
    }
  }
  for (NodeId i = 0; i < g_.node_count(); ++i) refill(i);
  check_done();
}

void Simulator::check_done() {
  if (phase_ == Phase::Traffic && resolved_ >= total_packets_) {
    phase_ = Phase::Done;
    m_.end_time = now_;
  }
}

void Simulator::dispatch(const Event& e) {
  switch (e.kind) {
    case EvKind::ExchangeEnd: on_exchange_end(e.payload); break;
    case EvKind::CtrlRxResolve: on_ctrl_rx(e.target); break;
    case EvKind::MacTimer:
      if (phase_ == Phase::Traffic) step(e.target, mac::TimerFired{static_cast<mac::TimerTag>(e.payload)});
      break;
    case EvKind::SlotBoundary: on_slot_boundary(); break;
    case EvKind::CtrlTx: on_ctrl_tx(e.target, e.payload); break;
  }
}

void Simulator::finalize(RunMetrics& m) {
  for (const auto& nd : nodes_) m.in_flight += static_cast<std::uint64_t>(nd.total);
  const double span = (m.end_time - m.traffic_start).seconds();
  m.normalized_throughput = span > 0 ? static_cast<double>(m.delivered_bits) / (cfg_.link_rate_bps * span) : 0.0;
  m.duplex_ratio = m.exchanges ? static_cast<double>(m.duplex_exchanges) / static_cast<double>(m.exchanges) : 0.0;
  m.occupancy_conflicts = occ_.conflicts();
  if (cfg_.protocol == Protocol::VlRoute) {
    const auto sinks = g_.sinks();
    for (NodeId i = 0; i < g_.node_count(); ++i) {
      for (std::size_t k = 0; k < sinks.size(); ++k) {
        const auto& e = nodes_[i].rs->entry(k);
        m.routing_snapshot.push_back(
            {i, sinks[k], e.rrs, e.mhc == routing::kInfiniteHops ? -1 : e.mhc});
      }
    }
  }
  m.trace_hash = trace_.hash();
  m.trace_records = trace_.count();
}

RunMetrics Simulator::run() {
  const auto wall0 = std::chrono::steady_clock::now();
  cfg_.validate();
  setup();
  m_.protocol = cfg_.protocol;
  m_.seed = cfg_.seed;
  m_.delivered_per_session.assign(sessions_.size(), 0);

  if (cfg_.protocol == Protocol::VlRoute) {
    phase_ = Phase::Warmup;
  } else {
    start_traffic();
  }
  if (phase_ != Phase::Done) schedule(SimTime{0}, EvKind::SlotBoundary, kNoNode);

  const SimTime cap_len{static_cast<std::int64_t>(cfg_.duration_cap_s * 1e6)};
  while (phase_ != Phase::Done && !queue_.empty()) {
    const Event e = queue_.top();
    if (phase_ == Phase::Traffic && e.t > m_.traffic_start + cap_len) {
      m_.hit_duration_cap = true;
      m_.end_time = m_.traffic_start + cap_len;
      break;
    }
    queue_.pop();
    now_ = e.t;
    dispatch(e);
  }
  if (phase_ == Phase::Done && m_.end_time < m_.traffic_start) m_.end_time = m_.traffic_start;
  finalize(m_);
  if (opts_.trace_out) trace_.write(*opts_.trace_out);
  m_.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  return m_;
}

}  // namespace

RunMetrics run(const ScenarioConfig& cfg, const ConnectivityGraph& g, const RunOptions& opts) {
  if (opts.warmup_only) {
    // No traffic phase follows, so sessions would only be validated and dropped.
    ScenarioConfig quiet = cfg;
    quiet.sessions = 0;
    quiet.explicit_sessions.clear();
    Simulator sim(quiet, g, opts);
    return sim.run();
  }
  Simulator sim(cfg, g, opts);
  return sim.run();
}

RunMetrics run(const ScenarioConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  const auto g = build_topology(cfg);
  return run(cfg, g, opts);
}

}  // namespace vlroute
