#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "sybil/p2dap.hpp"

namespace sybil::sim {

struct RoadModel {
  double length_m = 300.0;
  int lanes = 2;
  std::vector<double> rsu_positions_m{37.5, 112.5, 187.5, 262.5};
  double rsu_coverage_radius_m = 75.0;

  std::size_t rsu_count() const { return rsu_positions_m.size(); }
  std::string rsu_id(std::size_t index) const;
  bool rsu_covers(std::size_t index, double position_m) const;
  /// Indices of every RSU whose coverage contains the position.
  std::vector<std::size_t> rsus_covering(double position_m) const;

  /// Throws Errc::invariant_violation unless positions lie in [0, length],
  /// are strictly increasing, and the coverage discs tile the whole road.
  void validate() const;

  bool operator==(const RoadModel&) const = default;
};

enum class Mode { Hybrid, FootprintOnly, P2dapOnly };

std::string_view mode_name(Mode mode);
/// Throws Errc::invariant_violation for an unknown name.
Mode mode_from_name(std::string_view name);

struct ScenarioConfig {
  RoadModel road{};
  double sim_time_s = 900.0;
  std::size_t vehicles = 50;
  std::size_t attackers = 5;
  std::size_t forged_count = 2;
  double scenario_speed_kmh = 40.0;
  double speed_threshold_kmh = 40.0;
  Mode mode = Mode::Hybrid;
  std::size_t per_vehicle = 8;
  unsigned w_c = 8;
  unsigned w_f = 16;
  double tau_s = 5.0;
  std::size_t match_length = 2;
  double beacon_period_s = 1.0;
  double speed_window_s = 30.0;
  double recheck_period_s = 10.0;
  int pool_year = 2019;
  std::uint64_t seed = 1;

  /// Throws Errc::invariant_violation on the first violated invariant.
  void validate() const;

  p2dap::PoolParams pool_params() const;
  crypto::HashWidths widths() const { return {w_c, w_f}; }

  bool operator==(const ScenarioConfig&) const = default;
};

nlohmann::json config_to_json(const ScenarioConfig& config);

/// Applies defaults for missing keys. Unknown keys raise Errc::unknown_key,
/// ill-typed values Errc::malformed_json, and invariant violations
/// Errc::invariant_violation.
ScenarioConfig config_from_json(const nlohmann::json& doc);

}  // namespace sybil::sim
