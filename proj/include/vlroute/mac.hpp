#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "vlroute/core.hpp"
#include "vlroute/routing_state.hpp"

namespace vlroute::mac {

// ---------------------------------------------------------------------------
// Utility calculus

/// (d_ik - d_jk) / d_ij: progress toward k made by hopping i -> j, per meter
/// of hop length.
double normalized_progress(Position i, Position j, Position k);

/// rrs / max_rrs, or 0 when no neighbor has a positive score.
double normalized_rrs(double rrs, double max_rrs);

struct SessionBacklog {
  SessionId session = 0;
  std::size_t sink_idx = 0;
  Position sink_position;
  int backlog = 0;
};

struct NeighborInfo {
  NodeId id = kNoNode;
  Position position;
  Sector sector;             // as seen from the evaluating node
  std::vector<double> rrs;   // per sink index; ignored when rrs is disabled
};

struct UtilityInputs {
  Position self;
  std::vector<SessionBacklog> sessions;
  std::vector<NeighborInfo> neighbors;
  std::vector<double> max_rrs;  // per sink index, over all neighbors
  bool use_rrs = true;          // false: pure geographic weighting
};

/// Sum over backlogged sessions and forward-progress neighbors in sector s
/// of backlog * normalized progress * normalized score.
double initiator_utility(const UtilityInputs& in, Sector s);

std::vector<double> sector_utilities(const UtilityInputs& in, int n_sectors);

/// Argmax sector, lowest index on ties. nullopt if every utility is <= 0.
std::optional<Sector> select_sector(std::span<const double> utilities);

/// One candidate session for a directed transfer.
struct EtaTerm {
  SessionId session = 0;
  double rrs_norm = 0.0;
  double progress = 0.0;
  int sender_backlog = 0;
  int receiver_backlog = 0;
};

struct EtaChoice {
  std::optional<SessionId> session;
  double eta = 0.0;
};

/// Weighted differential backlog: picks the session maximizing
/// rrs_norm * progress * (b_sender - b_receiver). The value is floored at 0;
/// with no positive term there is no session.
EtaChoice select_session_eta(std::span<const EtaTerm> terms);

/// eta_ij * C_ij + eta_ji * C_ji.
double acceptor_utility(double eta_forward, double eta_reverse, double capacity_ij, double capacity_ji);

struct AcceptorCandidate {
  NodeId initiator = kNoNode;
  EtaChoice forward;
  EtaChoice reverse;
  double capacity_ij = 1.0;
  double capacity_ji = 1.0;

  double utility() const {
    return acceptor_utility(forward.eta, reverse.eta, capacity_ij, capacity_ji);
  }
};

/// Highest acceptor utility, lowest initiator id on ties. Only candidates
/// with a forward session qualify; nullopt means no ACN is sent.
std::optional<AcceptorCandidate> select_initiator(std::span<const AcceptorCandidate> candidates);

/// Priority offset subtracted from a uniform backoff draw:
/// round((cw-1)/2 * u/(u+u_ref)). Monotone in u.
int priority_offset(double utility, int cw, double u_ref);

/// Uniform draw in [0, cw-1] minus the priority offset, clamped to [0, cw-1].
int backoff_slots(double utility, int cw, double u_ref, std::uint64_t uniform_draw);

/// Neighbor closest to the sink, lowest id on ties; nullopt when no neighbor
/// is strictly closer than self (greedy local minimum).
struct NeighborPosition {
  NodeId id = kNoNode;
  Position position;
};
std::optional<NodeId> greedy_next_hop(Position self, Position sink, std::span<const NeighborPosition> neighbors);

// ---------------------------------------------------------------------------
// Control packets and the per-node state machines

struct SessionReport {
  SessionId session = 0;
  int backlog = 0;
};

struct ControlPacket {
  PacketKind kind = PacketKind::Art;
  NodeId src = kNoNode;
  NodeId dst = kNoNode;  // kNoNode: broadcast
  std::uint32_t size_bytes = 20;
  std::shared_ptr<const routing::Advert> advert;  // piggybacked routing state
  // ART
  std::vector<SessionReport> backlogs;
  std::vector<double> max_rrs;
  bool buffer_full = false;
  // ACN
  std::optional<SessionId> q_forward;
  std::optional<SessionId> q_reverse;
  // RES
  SimTime reservation_end;
};

enum class MacMode : std::uint8_t { SIdle, TrInitiator, TrAcceptor, TxData, RxData };

std::string_view to_string(MacMode m);

enum class Role : std::uint8_t { None, Initiator, Acceptor };

enum class TimerTag : std::uint8_t { AcnDecide, SendAcn, SendArt, InitiatorDeadline };

struct HandshakeContext {
  Role role = Role::None;
  Sector sector;  // transmit sector (initiator) or listening sector (acceptor)
  SimTime slot_start;
  std::vector<ControlPacket> arts;
  NodeId counterpart = kNoNode;
  std::optional<SessionId> q_forward;  // initiator -> acceptor
  std::optional<SessionId> q_reverse;  // acceptor -> initiator
  int backoff = 0;
  double utility = 0.0;
  bool art_pending = false;  // initiator still listening before its ART
  bool decision_pending = false;
  bool acn_pending = false;
  bool acn_sent = false;
  bool committed = false;  // initiator: RES or data scheduled
  bool joined = false;     // acceptor: partner's RES decoded
  bool aborted = false;
};

struct MacState {
  MacMode mode = MacMode::SIdle;
  HandshakeContext ctx;
  // CSMA/CA backoff counter in request-window CMS units; -1 = not drawn.
  int csma_counter = -1;
};

struct SlotStart {
  SimTime start;
  Sector listen;    // global listening sector for idle nodes
  Sector transmit;  // sector idle listeners can hear from this slot
};
struct ControlHeard {
  int cms = 0;       // CMS index within the slot the packets were sent in
  Sector sector;     // sector the node was listening to
  int energy = 0;    // number of overlapping arrivals
  const ControlPacket* decoded = nullptr;
};
struct TimerFired {
  TimerTag tag;
};
struct SlotEnd {};
struct ExchangeDone {};

using MacEvent = std::variant<SlotStart, ControlHeard, TimerFired, SlotEnd, ExchangeDone>;

struct SendControl {
  int cms = 0;  // CMS index to transmit in; never earlier than the current one
  Sector sector;
  ControlPacket packet;
};
struct SetTimer {
  int cms = 0;  // fires at slot_start + cms * CMS
  TimerTag tag;
};
struct CommitExchange {
  Role role = Role::None;
  NodeId peer = kNoNode;
  Sector facing;
  std::optional<SessionId> send_session;
  bool emit = true;  // false: silent receiver (no busy tone)
};
struct CsmaFailure {};  // handshake failed; engine applies BEB / retry limit

using MacAction = std::variant<SendControl, SetTimer, CommitExchange, CsmaFailure>;
using MacActions = std::vector<MacAction>;

struct MacTiming {
  int art_window = 4;   // CMS available for ART backoff (= contention window)
  int acn_window = 3;   // CMS available for ACN backoff
  int cms_per_slot = 8;
  double backoff_u_ref = 25.0;
  int csma_cw_max = 64;
};

/// What a node's MAC needs from the rest of the simulator. Implemented by the
/// engine per node, and by fakes in tests.
class MacEnv {
 public:
  virtual ~MacEnv() = default;
  virtual NodeId self() const = 0;
  virtual const MacTiming& timing() const = 0;
  virtual bool has_backlog() const = 0;
  virtual bool dc_busy(Sector s) const = 0;
  virtual std::uint64_t draw() = 0;  // node-local uniform bits

  // VL-MAC family
  virtual std::span<const double> sector_utilities() = 0;
  virtual ControlPacket make_art() = 0;
  virtual AcceptorCandidate evaluate_art(const ControlPacket& art) = 0;
  virtual std::shared_ptr<const routing::Advert> advert() = 0;
  virtual SimTime reservation_end() const = 0;

  // CSMA/CA baseline
  struct CsmaTarget {
    NodeId next_hop = kNoNode;
    Sector sector;
    int attempts = 0;
  };
  virtual std::optional<CsmaTarget> csma_target() = 0;
  virtual std::optional<SessionId> csma_reverse_session(NodeId toward) = 0;
};

/// VL-MAC three-way handshake (ART / ACN / RES) with utility-driven sector,
/// session and initiator selection. Used by VL-ROUTE and VL-MAC-GEO.
///
/// Slot layout in CMS units: ARTs in [0, art_window), ACNs in
/// [art_window, art_window + acn_window), a RES goes out one CMS after the
/// initiator decodes its ACN. Data starts at the next slot boundary.
///
/// Deference rules:
///  - until its ART goes out a prospective initiator keeps listening in the
///    slot's idle sector; energy there means the channel is not idle, and a
///    clean ART turns it into a prospective acceptor instead;
///  - an initiator that hears any ACN energy other than a clean ACN addressed
///    to it before committing returns to S_IDLE;
///  - an acceptor that hears RES energy other than a clean RES from its chosen
///    initiator (before or after its own ACN) abandons the slot.
MacActions vl_handshake_step(MacState& st, const MacEvent& ev, MacEnv& env);

/// Slotted CSMA/CA toward a fixed greedy next hop: request (ART) at the
/// backoff CMS of the matching sector slot, clear-to-send (ACN) one CMS
/// later, binary exponential backoff on failure. The receiver sends data
/// back in the same exchange when it holds traffic whose next hop is the
/// sender.
MacActions csma_ca_step(MacState& st, const MacEvent& ev, MacEnv& env);

}  // namespace vlroute::mac
