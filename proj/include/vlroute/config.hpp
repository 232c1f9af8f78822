#pragma once

#include <string>
#include <vector>

#include "vlroute/engine.hpp"

namespace vlroute {

enum class SweptParam : std::uint8_t { Sessions, SevereFraction, EstimationError };

std::string_view to_string(SweptParam p);
std::optional<SweptParam> parse_swept_param(std::string_view s);

struct SweepSpec {
  ScenarioConfig base;
  SweptParam param = SweptParam::Sessions;
  std::vector<double> values;
  int seeds = 10;
  std::uint64_t first_seed = 1;
  std::vector<Protocol> protocols{Protocol::VlRoute, Protocol::VlMacGeo, Protocol::GrCsma};

  void validate() const;
};

/// INI-style scenario file. Sections: [topology] [traffic] [mac] [channel]
/// [run] and, for sweeps, [sweep]. Unknown sections or keys are rejected.
/// Missing keys keep the built-in defaults. Throws std::runtime_error.
ScenarioConfig parse_scenario(const std::string& text);
ScenarioConfig load_scenario(const std::string& path);

SweepSpec parse_sweep(const std::string& text);
SweepSpec load_sweep(const std::string& path);

/// "2,4,8" or "start:stop:step" (inclusive stop).
std::vector<double> parse_value_list(const std::string& s);

/// Scenario rendered back to the same INI schema.
std::string scenario_to_ini(const ScenarioConfig& cfg);

}  // namespace vlroute
