#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "sybil/config.hpp"
#include "sybil/crypto.hpp"

namespace sybil::sim {

enum class VehicleKind { Honest, Sybil };

struct VehicleAgent {
  std::string physical_id;
  VehicleKind kind = VehicleKind::Honest;
  int lane = 0;
  double entry_time_s = 0.0;
  double speed_kmh = 0.0;
  double entry_position_m = 0.0;
  std::vector<crypto::Pseudonym> pseudonyms;
  // Honest: one identity. Sybil: own identity first, then the forged ones;
  // identity i beacons with pseudonyms[i].
  std::vector<std::string> claimed_identities;
  double beacon_period_s = 1.0;

  double speed_mps() const { return speed_kmh / 3.6; }
  /// Position clamped to [entry position, road end].
  double position_at(double t, const RoadModel& road) const;
  /// Time the vehicle reaches the end of the road; +inf when stationary.
  double exit_time(const RoadModel& road) const;
};

struct CoverageInterval {
  std::size_t rsu_index = 0;
  double enter = 0.0;
  double leave = 0.0;  // +inf for a stationary vehicle inside coverage

  double dwell() const { return leave - enter; }
};

/// Closed-form time spans the agent spends inside each RSU's coverage while
/// on the road, ordered by (enter, rsu index).
std::vector<CoverageInterval> coverage_intervals(const RoadModel& road, const VehicleAgent& agent);

struct Contact {
  std::size_t rsu_index = 0;
  double entry_time = 0.0;
  bool operator==(const Contact&) const = default;
};

/// First-entry times into each RSU's coverage, ordered by time.
std::vector<Contact> coverage_contacts(const RoadModel& road, const VehicleAgent& agent);

/// Per-run RNG root: hash(seed, scenario_id).
std::uint64_t run_stream_seed(std::uint64_t seed, std::uint64_t scenario_id);

/// Arrival plan for one run. Entry times are order statistics of uniform
/// draws over [0, sim_time) (a Poisson process conditioned on the count),
/// rounded to the millisecond; lanes uniform; speeds Normal(scenario speed,
/// 10%) truncated at +/-25%; a seeded subset of `attackers` vehicles is
/// Sybil. When `pool` is given, vehicle i takes the pool's i-th id and
/// pseudonyms. Throws Errc::invariant_violation when attackers > vehicles
/// or the pool is too small.
std::vector<VehicleAgent> generate_arrivals(const ScenarioConfig& config, std::uint64_t stream_seed,
                                            const p2dap::PseudonymPool* pool = nullptr);

}  // namespace sybil::sim
