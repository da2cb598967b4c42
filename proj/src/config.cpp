#include "sybil/config.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "sybil/error.hpp"

namespace sybil::sim {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(Errc::invariant_violation, what);
}

template <typename T>
void read(const nlohmann::json& doc, const char* key, T& out) {
  auto it = doc.find(key);
  if (it == doc.end()) return;
  try {
    if constexpr (std::is_unsigned_v<T>) {
      if (!it->is_number_unsigned()) throw Error(Errc::malformed_json, std::string("'") + key + "' must be a non-negative integer");
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer()) throw Error(Errc::malformed_json, std::string("'") + key + "' must be an integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) throw Error(Errc::malformed_json, std::string("'") + key + "' must be a number");
    }
    out = it->get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::malformed_json, std::string("'") + key + "': " + e.what());
  }
}

void reject_unknown(const nlohmann::json& doc, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, _] : doc.items()) {
    if (!known.contains(key)) throw Error(Errc::unknown_key, "unknown key '" + key + "' in " + where);
  }
}

}  // namespace

std::string RoadModel::rsu_id(std::size_t index) const { return "rsu-" + std::to_string(index); }

bool RoadModel::rsu_covers(std::size_t index, double position_m) const {
  return std::abs(position_m - rsu_positions_m[index]) <= rsu_coverage_radius_m;
}

std::vector<std::size_t> RoadModel::rsus_covering(double position_m) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < rsu_positions_m.size(); ++i) {
    if (rsu_covers(i, position_m)) out.push_back(i);
  }
  return out;
}

void RoadModel::validate() const {
  require(length_m > 0.0, "road length must be > 0");
  require(lanes >= 1, "lanes must be >= 1");
  require(!rsu_positions_m.empty(), "at least one RSU is required");
  require(rsu_coverage_radius_m > 0.0, "coverage radius must be > 0");
  for (std::size_t i = 0; i < rsu_positions_m.size(); ++i) {
    require(rsu_positions_m[i] >= 0.0 && rsu_positions_m[i] <= length_m, "RSU position outside [0, length]");
    if (i > 0) require(rsu_positions_m[i] > rsu_positions_m[i - 1], "RSU positions must be strictly increasing");
  }
  // Intervals are sorted, so coverage is gap-free iff each disc starts
  // before the previous reach ends.
  double reach = 0.0;
  for (double p : rsu_positions_m) {
    require(p - rsu_coverage_radius_m <= reach, "RSU coverage leaves a gap before " + std::to_string(p) + " m");
    reach = std::max(reach, p + rsu_coverage_radius_m);
  }
  require(reach >= length_m, "RSU coverage does not reach the end of the road");
}

std::string_view mode_name(Mode mode) {
  switch (mode) {
    case Mode::Hybrid: return "hybrid";
    case Mode::FootprintOnly: return "footprint-only";
    case Mode::P2dapOnly: return "p2dap-only";
  }
  return "hybrid";
}

Mode mode_from_name(std::string_view name) {
  if (name == "hybrid") return Mode::Hybrid;
  if (name == "footprint-only") return Mode::FootprintOnly;
  if (name == "p2dap-only") return Mode::P2dapOnly;
  throw Error(Errc::invariant_violation, "unknown mode '" + std::string(name) + "'");
}

void ScenarioConfig::validate() const {
  road.validate();
  require(sim_time_s > 0.0, "sim_time_s must be > 0");
  require(vehicles >= 1, "vehicles must be >= 1");
  require(attackers <= vehicles, "attackers must not exceed vehicles");
  require(scenario_speed_kmh > 0.0, "scenario_speed_kmh must be > 0");
  require(speed_threshold_kmh > 0.0, "speed_threshold_kmh must be > 0");
  require(per_vehicle >= 1 && per_vehicle <= 255, "per_vehicle must be in [1, 255]");
  require(attackers == 0 || per_vehicle >= 1 + forged_count,
          "per_vehicle must cover the attacker's own identity plus forged_count");
  require(w_c >= 1 && w_f >= 1 && w_c + w_f <= 32, "hash widths must be >= 1 bit and sum to <= 32");
  require((std::uint64_t{1} << (w_c + w_f)) >= vehicles, "2^(w_c + w_f) must be >= vehicles");
  require(tau_s > 0.0, "tau_s must be > 0");
  require(match_length >= 1, "match_length must be >= 1");
  require(beacon_period_s > 0.0, "beacon_period_s must be > 0");
  require(speed_window_s > 0.0, "speed_window_s must be > 0");
  require(recheck_period_s > 0.0, "recheck_period_s must be > 0");
}

p2dap::PoolParams ScenarioConfig::pool_params() const {
  p2dap::PoolParams params;
  params.n_vehicles = vehicles;
  params.per_vehicle = per_vehicle;
  params.widths = widths();
  return params;
}

nlohmann::json config_to_json(const ScenarioConfig& c) {
  return {
      {"road",
       {{"length_m", c.road.length_m},
        {"lanes", c.road.lanes},
        {"rsu_positions_m", c.road.rsu_positions_m},
        {"rsu_coverage_radius_m", c.road.rsu_coverage_radius_m}}},
      {"sim_time_s", c.sim_time_s},
      {"vehicles", c.vehicles},
      {"attackers", c.attackers},
      {"forged_count", c.forged_count},
      {"scenario_speed_kmh", c.scenario_speed_kmh},
      {"speed_threshold_kmh", c.speed_threshold_kmh},
      {"mode", mode_name(c.mode)},
      {"per_vehicle", c.per_vehicle},
      {"w_c", c.w_c},
      {"w_f", c.w_f},
      {"tau_s", c.tau_s},
      {"match_length", c.match_length},
      {"beacon_period_s", c.beacon_period_s},
      {"speed_window_s", c.speed_window_s},
      {"recheck_period_s", c.recheck_period_s},
      {"pool_year", c.pool_year},
      {"seed", c.seed},
  };
}

ScenarioConfig config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw Error(Errc::malformed_json, "config must be a JSON object");
  reject_unknown(doc,
                 {"road", "sim_time_s", "vehicles", "attackers", "forged_count", "scenario_speed_kmh",
                  "speed_threshold_kmh", "mode", "per_vehicle", "w_c", "w_f", "tau_s", "match_length",
                  "beacon_period_s", "speed_window_s", "recheck_period_s", "pool_year", "seed"},
                 "config");
  ScenarioConfig c;
  if (auto it = doc.find("road"); it != doc.end()) {
    if (!it->is_object()) throw Error(Errc::malformed_json, "'road' must be an object");
    reject_unknown(*it, {"length_m", "lanes", "rsu_positions_m", "rsu_coverage_radius_m"}, "road");
    read(*it, "length_m", c.road.length_m);
    read(*it, "lanes", c.road.lanes);
    read(*it, "rsu_coverage_radius_m", c.road.rsu_coverage_radius_m);
    if (auto pos = it->find("rsu_positions_m"); pos != it->end()) {
      if (!pos->is_array()) throw Error(Errc::malformed_json, "'rsu_positions_m' must be an array");
      c.road.rsu_positions_m.clear();
      for (const auto& p : *pos) {
        if (!p.is_number()) throw Error(Errc::malformed_json, "'rsu_positions_m' entries must be numbers");
        c.road.rsu_positions_m.push_back(p.get<double>());
      }
    }
  }
  read(doc, "sim_time_s", c.sim_time_s);
  read(doc, "vehicles", c.vehicles);
  read(doc, "attackers", c.attackers);
  read(doc, "forged_count", c.forged_count);
  read(doc, "scenario_speed_kmh", c.scenario_speed_kmh);
  read(doc, "speed_threshold_kmh", c.speed_threshold_kmh);
  if (auto it = doc.find("mode"); it != doc.end()) {
    if (!it->is_string()) throw Error(Errc::malformed_json, "'mode' must be a string");
    c.mode = mode_from_name(it->get<std::string>());
  }
  read(doc, "per_vehicle", c.per_vehicle);
  read(doc, "w_c", c.w_c);
  read(doc, "w_f", c.w_f);
  read(doc, "tau_s", c.tau_s);
  read(doc, "match_length", c.match_length);
  read(doc, "beacon_period_s", c.beacon_period_s);
  read(doc, "speed_window_s", c.speed_window_s);
  read(doc, "recheck_period_s", c.recheck_period_s);
  read(doc, "pool_year", c.pool_year);
  read(doc, "seed", c.seed);
  c.validate();
  return c;
}

}  // namespace sybil::sim
