#include "vlroute/mac.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vlroute::mac {

double normalized_progress(Position i, Position j, Position k) {
  const double dij = distance(i, j);
  if (dij <= 0.0) throw std::invalid_argument("normalized_progress: coincident i and j");
  return (distance(i, k) - distance(j, k)) / dij;
}

double normalized_rrs(double rrs, double max_rrs) {
  if (max_rrs <= 0.0) return 0.0;
  return std::min(1.0, rrs / max_rrs);
}

double initiator_utility(const UtilityInputs& in, Sector s) {
  double u = 0.0;
  for (const auto& q : in.sessions) {
    if (q.backlog <= 0) continue;
    const double d_ik = distance(in.self, q.sink_position);
    for (const auto& nb : in.neighbors) {
      if (nb.sector != s) continue;
      if (!(distance(nb.position, q.sink_position) < d_ik)) continue;
      const double prog = normalized_progress(in.self, nb.position, q.sink_position);
      const double rrs =
          in.use_rrs ? normalized_rrs(nb.rrs.at(q.sink_idx), in.max_rrs.at(q.sink_idx)) : 1.0;
      u += q.backlog * prog * rrs;
    }
  }
  return u;
}

std::vector<double> sector_utilities(const UtilityInputs& in, int n_sectors) {
  std::vector<double> out(static_cast<std::size_t>(n_sectors));
  for (int s = 0; s < n_sectors; ++s) out[static_cast<std::size_t>(s)] = initiator_utility(in, Sector{s});
  return out;
}

std::optional<Sector> select_sector(std::span<const double> utilities) {
  std::optional<Sector> best;
  double best_u = 0.0;
  for (std::size_t s = 0; s < utilities.size(); ++s) {
    if (utilities[s] > best_u) {
      best_u = utilities[s];
      best = Sector{static_cast<int>(s)};
    }
  }
  return best;
}

EtaChoice select_session_eta(std::span<const EtaTerm> terms) {
  EtaChoice out;
  for (const auto& t : terms) {
    const double v = t.rrs_norm * t.progress * (t.sender_backlog - t.receiver_backlog);
    if (v > out.eta) {
      out.eta = v;
      out.session = t.session;
    }
  }
  return out;
}

double acceptor_utility(double eta_forward, double eta_reverse, double capacity_ij, double capacity_ji) {
  return eta_forward * capacity_ij + eta_reverse * capacity_ji;
}

std::optional<AcceptorCandidate> select_initiator(std::span<const AcceptorCandidate> candidates) {
  std::optional<AcceptorCandidate> best;
  double best_u = 0.0;
  for (const auto& c : candidates) {
    if (!c.forward.session) continue;
    const double u = c.utility();
    if (!best || u > best_u || (u == best_u && c.initiator < best->initiator)) {
      best = c;
      best_u = u;
    }
  }
  return best;
}

int priority_offset(double utility, int cw, double u_ref) {
  if (cw <= 1 || utility <= 0.0) return 0;
  const double frac = utility / (utility + u_ref);
  return static_cast<int>(std::floor(0.5 * (cw - 1) * frac + 0.5));
}

int backoff_slots(double utility, int cw, double u_ref, std::uint64_t uniform_draw) {
  if (cw < 1) throw std::invalid_argument("backoff_slots: cw must be >= 1");
  const int raw = static_cast<int>(uniform_draw % static_cast<std::uint64_t>(cw));
  return std::clamp(raw - priority_offset(utility, cw, u_ref), 0, cw - 1);
}

std::optional<NodeId> greedy_next_hop(Position self, Position sink, std::span<const NeighborPosition> neighbors) {
  std::optional<NodeId> best;
  double best_d = distance(self, sink);
  for (const auto& nb : neighbors) {
    const double d = distance(nb.position, sink);
    if (d < best_d || (best && d == best_d && nb.id < *best)) {
      best_d = d;
      best = nb.id;
    }
  }
  return best;
}

std::string_view to_string(MacMode m) {
  switch (m) {
    case MacMode::SIdle: return "S_IDLE";
    case MacMode::TrInitiator: return "TR_INITIATOR";
    case MacMode::TrAcceptor: return "TR_ACCEPTOR";
    case MacMode::TxData: return "TX_DATA";
    case MacMode::RxData: return "RX_DATA";
  }
  return "?";
}

namespace {

void go_idle(MacState& st) {
  st.mode = MacMode::SIdle;
  st.ctx = HandshakeContext{};
}

ControlPacket reply(PacketKind kind, NodeId src, NodeId dst, std::shared_ptr<const routing::Advert> advert) {
  ControlPacket p;
  p.kind = kind;
  p.src = src;
  p.dst = dst;
  p.advert = std::move(advert);
  return p;
}

}  // namespace

MacActions vl_handshake_step(MacState& st, const MacEvent& ev, MacEnv& env) {
  const MacTiming& tm = env.timing();
  auto& ctx = st.ctx;
  MacActions out;

  if (const auto* e = std::get_if<SlotStart>(&ev)) {
    if (st.mode != MacMode::SIdle || !env.has_backlog()) return out;
    const auto utils = env.sector_utilities();
    const auto s = select_sector(utils);
    if (!s || *s != e->transmit || env.dc_busy(*s)) return out;
    ctx = HandshakeContext{};
    st.mode = MacMode::TrInitiator;
    ctx.role = Role::Initiator;
    ctx.sector = *s;
    ctx.slot_start = e->start;
    ctx.utility = utils[static_cast<std::size_t>(s->index)];
    ctx.backoff = backoff_slots(ctx.utility, tm.art_window, tm.backoff_u_ref, env.draw());
    ctx.art_pending = true;
    out.push_back(SetTimer{ctx.backoff, TimerTag::SendArt});
    out.push_back(SetTimer{tm.art_window + tm.acn_window, TimerTag::InitiatorDeadline});
    return out;
  }

  auto become_acceptor = [&](const ControlPacket& art, Sector heard_on) {
    ctx = HandshakeContext{};
    st.mode = MacMode::TrAcceptor;
    ctx.role = Role::Acceptor;
    ctx.sector = heard_on;
    ctx.arts.push_back(art);
    ctx.decision_pending = true;
    out.push_back(SetTimer{tm.art_window, TimerTag::AcnDecide});
  };

  if (const auto* e = std::get_if<ControlHeard>(&ev)) {
    const ControlPacket* pkt = e->decoded;
    switch (st.mode) {
      case MacMode::SIdle:
        if (pkt && pkt->kind == PacketKind::Art && pkt->dst == kNoNode && e->cms < tm.art_window) {
          become_acceptor(*pkt, e->sector);
        }
        break;
      case MacMode::TrAcceptor:
        if (e->cms < tm.art_window) {
          if (pkt && pkt->kind == PacketKind::Art && pkt->dst == kNoNode) ctx.arts.push_back(*pkt);
          break;
        }
        if (e->energy == 0) break;
        if (pkt && pkt->kind == PacketKind::Res && ctx.acn_sent && pkt->src == ctx.counterpart &&
            pkt->dst == env.self()) {
          ctx.joined = true;
        } else if (!(pkt && pkt->kind == PacketKind::Acn)) {
          // Any other reservation in this direction: step aside.
          go_idle(st);
        }
        break;
      case MacMode::TrInitiator:
        if (ctx.committed || e->energy == 0) break;
        if (ctx.art_pending) {
          if (pkt && pkt->kind == PacketKind::Art && pkt->dst == kNoNode && e->cms < tm.art_window) {
            become_acceptor(*pkt, e->sector);
          } else {
            go_idle(st);
          }
          break;
        }
        if (pkt && pkt->kind == PacketKind::Acn && pkt->dst == env.self()) {
          ctx.committed = true;
          ctx.counterpart = pkt->src;
          ctx.q_forward = pkt->q_forward;
          ctx.q_reverse = pkt->q_reverse;
          auto res = reply(PacketKind::Res, env.self(), pkt->src, env.advert());
          res.reservation_end = env.reservation_end();
          out.push_back(SendControl{e->cms + 1, ctx.sector, std::move(res)});
        } else {
          go_idle(st);
        }
        break;
      default:
        break;
    }
    return out;
  }

  if (const auto* e = std::get_if<TimerFired>(&ev)) {
    switch (e->tag) {
      case TimerTag::AcnDecide: {
        if (st.mode != MacMode::TrAcceptor || !ctx.decision_pending) break;
        ctx.decision_pending = false;
        std::vector<AcceptorCandidate> cands;
        cands.reserve(ctx.arts.size());
        for (const auto& art : ctx.arts) cands.push_back(env.evaluate_art(art));
        const auto choice = select_initiator(cands);
        if (!choice || env.dc_busy(ctx.sector)) {
          go_idle(st);
          break;
        }
        ctx.counterpart = choice->initiator;
        ctx.q_forward = choice->forward.session;
        ctx.q_reverse = choice->reverse.session;
        ctx.utility = choice->forward.eta + choice->reverse.eta;
        ctx.backoff = backoff_slots(ctx.utility, tm.acn_window, tm.backoff_u_ref, env.draw());
        ctx.acn_pending = true;
        out.push_back(SetTimer{tm.art_window + ctx.backoff, TimerTag::SendAcn});
        break;
      }
      case TimerTag::SendAcn: {
        if (st.mode != MacMode::TrAcceptor || !ctx.acn_pending) break;
        ctx.acn_pending = false;
        if (env.dc_busy(ctx.sector)) {
          go_idle(st);
          break;
        }
        auto acn = reply(PacketKind::Acn, env.self(), ctx.counterpart, env.advert());
        acn.q_forward = ctx.q_forward;
        acn.q_reverse = ctx.q_reverse;
        ctx.acn_sent = true;
        out.push_back(SendControl{tm.art_window + ctx.backoff, ctx.sector, std::move(acn)});
        break;
      }
      case TimerTag::InitiatorDeadline:
        if (st.mode == MacMode::TrInitiator && !ctx.committed) go_idle(st);
        break;
      case TimerTag::SendArt:
        if (st.mode != MacMode::TrInitiator || !ctx.art_pending) break;
        ctx.art_pending = false;
        if (env.dc_busy(ctx.sector)) {
          go_idle(st);
          break;
        }
        out.push_back(SendControl{ctx.backoff, ctx.sector, env.make_art()});
        break;
    }
    return out;
  }

  if (std::holds_alternative<SlotEnd>(ev)) {
    if (st.mode == MacMode::TrInitiator && ctx.committed) {
      out.push_back(CommitExchange{Role::Initiator, ctx.counterpart, ctx.sector, ctx.q_forward, true});
      st.mode = MacMode::TxData;
    } else if (st.mode == MacMode::TrAcceptor && ctx.joined) {
      // With no reverse session the acceptor still emits: a busy tone.
      out.push_back(CommitExchange{Role::Acceptor, ctx.counterpart, ctx.sector, ctx.q_reverse, true});
      st.mode = MacMode::RxData;
    } else if (st.mode == MacMode::TrInitiator || st.mode == MacMode::TrAcceptor) {
      go_idle(st);
    }
    return out;
  }

  if (std::holds_alternative<ExchangeDone>(ev)) go_idle(st);
  return out;
}

MacActions csma_ca_step(MacState& st, const MacEvent& ev, MacEnv& env) {
  const MacTiming& tm = env.timing();
  auto& ctx = st.ctx;
  MacActions out;

  if (const auto* e = std::get_if<SlotStart>(&ev)) {
    if (st.mode != MacMode::SIdle || !env.has_backlog()) return out;
    const auto target = env.csma_target();
    if (!target || target->sector != e->transmit) return out;
    // Busy medium freezes the counter.
    if (env.dc_busy(target->sector)) return out;
    if (st.csma_counter < 0) {
      const int shift = std::min(target->attempts, 16);
      const int cw = std::min(tm.art_window << shift, std::max(tm.csma_cw_max, tm.art_window));
      st.csma_counter = static_cast<int>(env.draw() % static_cast<std::uint64_t>(cw));
    }
    if (st.csma_counter >= tm.art_window) {
      st.csma_counter -= tm.art_window;
      return out;
    }
    ctx = HandshakeContext{};
    st.mode = MacMode::TrInitiator;
    ctx.role = Role::Initiator;
    ctx.sector = target->sector;
    ctx.slot_start = e->start;
    ctx.counterpart = target->next_hop;
    ctx.backoff = st.csma_counter;
    st.csma_counter = -1;
    out.push_back(SetTimer{ctx.backoff, TimerTag::SendArt});
    out.push_back(SetTimer{ctx.backoff + 2, TimerTag::InitiatorDeadline});
    return out;
  }

  if (const auto* e = std::get_if<ControlHeard>(&ev)) {
    const ControlPacket* pkt = e->decoded;
    switch (st.mode) {
      case MacMode::SIdle:
        if (pkt && pkt->kind == PacketKind::Art && pkt->dst == env.self() && e->cms < tm.art_window &&
            !env.dc_busy(e->sector)) {
          ctx = HandshakeContext{};
          st.mode = MacMode::TrAcceptor;
          ctx.role = Role::Acceptor;
          ctx.sector = e->sector;
          ctx.counterpart = pkt->src;
          ctx.q_reverse = env.csma_reverse_session(pkt->src);
          ctx.joined = true;
          auto cts = reply(PacketKind::Acn, env.self(), pkt->src, nullptr);
          cts.q_reverse = ctx.q_reverse;
          out.push_back(SendControl{e->cms + 1, ctx.sector, std::move(cts)});
        }
        break;
      case MacMode::TrInitiator:
        if (ctx.committed || e->energy == 0) break;
        if (e->cms < ctx.backoff) {
          // Someone else's clear-to-send in this direction: defer without penalty.
          go_idle(st);
        } else if (pkt && pkt->kind == PacketKind::Acn && pkt->dst == env.self() && pkt->src == ctx.counterpart) {
          ctx.committed = true;
          ctx.q_reverse = pkt->q_reverse;
        }
        break;
      default:
        break;
    }
    return out;
  }

  if (const auto* e = std::get_if<TimerFired>(&ev)) {
    if (st.mode != MacMode::TrInitiator) return out;
    if (e->tag == TimerTag::SendArt && !ctx.committed) {
      auto req = reply(PacketKind::Art, env.self(), ctx.counterpart, nullptr);
      out.push_back(SendControl{ctx.backoff, ctx.sector, std::move(req)});
    } else if (e->tag == TimerTag::InitiatorDeadline && !ctx.committed) {
      out.push_back(CsmaFailure{});
      go_idle(st);
    }
    return out;
  }

  if (std::holds_alternative<SlotEnd>(ev)) {
    if (st.mode == MacMode::TrInitiator && ctx.committed) {
      out.push_back(CommitExchange{Role::Initiator, ctx.counterpart, ctx.sector, std::nullopt, true});
      st.mode = MacMode::TxData;
    } else if (st.mode == MacMode::TrAcceptor && ctx.joined) {
      out.push_back(
          CommitExchange{Role::Acceptor, ctx.counterpart, ctx.sector, ctx.q_reverse, ctx.q_reverse.has_value()});
      st.mode = MacMode::RxData;
    } else if (st.mode == MacMode::TrInitiator || st.mode == MacMode::TrAcceptor) {
      go_idle(st);
    }
    return out;
  }

  if (std::holds_alternative<ExchangeDone>(ev)) go_idle(st);
  return out;
}

}  // namespace vlroute::mac
