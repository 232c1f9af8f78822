#include "vlroute/core.hpp"

#include <cmath>
#include <numbers>

namespace vlroute {

double distance(Position a, Position b) { return std::hypot(a.x - b.x, a.y - b.y); }

Sector sector_of(Position observer, Position target, int n_sectors) {
  if (n_sectors < 1) throw std::invalid_argument("sector_of: n_sectors must be >= 1");
  const double dx = target.x - observer.x;
  const double dy = target.y - observer.y;
  if (dx == 0.0 && dy == 0.0) throw std::invalid_argument("sector_of: coincident positions");

  constexpr double two_pi = 2.0 * std::numbers::pi;
  const double span = two_pi / n_sectors;
  double bearing = std::atan2(dy, dx);
  if (bearing < 0.0) bearing += two_pi;

  // Sector 0 is centered on +x, so shift by half a span before bucketing.
  const double units = (bearing + span / 2.0) / span;
  double whole = std::floor(units);
  // Snap bearings within rounding noise of a boundary onto it (higher index wins).
  if (units - whole > 1.0 - 1e-9) whole += 1.0;
  const int idx = static_cast<int>(whole) % n_sectors;
  return Sector{idx};
}

std::string_view to_string(PacketKind kind) {
  switch (kind) {
    case PacketKind::Art: return "ART";
    case PacketKind::Acn: return "ACN";
    case PacketKind::Res: return "RES";
    case PacketKind::Data: return "DATA";
    case PacketKind::Ack: return "ACK";
    case PacketKind::BusyTone: return "BUSY_TONE";
    case PacketKind::Beacon: return "BEACON";
  }
  return "?";
}

}  // namespace vlroute
