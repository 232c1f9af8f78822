#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string_view>

namespace vlroute {

using NodeId = std::uint32_t;
using SinkId = NodeId;
using SessionId = std::uint32_t;

inline constexpr NodeId kNoNode = static_cast<NodeId>(-1);

/// Simulation time in integer microseconds.
struct SimTime {
  std::int64_t ticks = 0;

  constexpr auto operator<=>(const SimTime&) const = default;
  constexpr SimTime operator+(SimTime o) const { return {ticks + o.ticks}; }
  constexpr SimTime operator-(SimTime o) const { return {ticks - o.ticks}; }
  constexpr double seconds() const { return static_cast<double>(ticks) * 1e-6; }
};

constexpr SimTime microseconds(std::int64_t us) { return {us}; }

struct Position {
  double x = 0.0;
  double y = 0.0;

  constexpr bool operator==(const Position&) const = default;
};

/// Index of an angular sector around a node. Sector 0 is centered on +x,
/// indices grow counterclockwise.
struct Sector {
  int index = 0;

  constexpr auto operator<=>(const Sector&) const = default;
};

/// Sector facing the opposite way; only meaningful for even sector counts.
constexpr Sector opposite(Sector s, int n_sectors) {
  return Sector{(s.index + n_sectors / 2) % n_sectors};
}

double distance(Position a, Position b);

/// Sector of `target` as seen from `observer`. Bearings on a boundary belong
/// to the higher-indexed sector.
Sector sector_of(Position observer, Position target, int n_sectors);

struct DirectedLink {
  NodeId from = kNoNode;
  NodeId to = kNoNode;
  Sector sector_at_from;
  Sector sector_at_to;
  double p_error = 0.0;
  double p_blockage = 0.0;
  double capacity_bps = 10e6;
};

struct Session {
  SessionId id = 0;
  NodeId source = kNoNode;
  SinkId sink = kNoNode;
  std::uint32_t packets_total = 0;
  std::uint32_t payload_bytes = 2500;
};

enum class PacketKind : std::uint8_t { Art, Acn, Res, Data, Ack, BusyTone, Beacon };

std::string_view to_string(PacketKind kind);

constexpr bool is_control(PacketKind kind) {
  return kind == PacketKind::Art || kind == PacketKind::Acn || kind == PacketKind::Res ||
         kind == PacketKind::Beacon || kind == PacketKind::Ack;
}

/// Airtime of `bytes` at `rate_bps`, rounded up to whole microseconds.
constexpr SimTime airtime(std::uint32_t bytes, double rate_bps) {
  const double us = static_cast<double>(bytes) * 8.0 * 1e6 / rate_bps;
  auto whole = static_cast<std::int64_t>(us);
  if (static_cast<double>(whole) < us) ++whole;
  return {whole};
}

}  // namespace vlroute
