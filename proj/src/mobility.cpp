#include "sybil/mobility.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "sybil/error.hpp"
#include "sybil/rng.hpp"

namespace sybil::sim {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

std::string default_vehicle_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "veh-%04zu", i);
  return buf;
}
}  // namespace

double VehicleAgent::position_at(double t, const RoadModel& road) const {
  if (t <= entry_time_s) return entry_position_m;
  return std::min(road.length_m, entry_position_m + speed_mps() * (t - entry_time_s));
}

double VehicleAgent::exit_time(const RoadModel& road) const {
  if (speed_kmh <= 0.0) return kInf;
  return entry_time_s + (road.length_m - entry_position_m) / speed_mps();
}

std::vector<CoverageInterval> coverage_intervals(const RoadModel& road, const VehicleAgent& agent) {
  std::vector<CoverageInterval> out;
  const double x0 = agent.entry_position_m;
  for (std::size_t i = 0; i < road.rsu_count(); ++i) {
    const double lo = road.rsu_positions_m[i] - road.rsu_coverage_radius_m;
    const double hi = road.rsu_positions_m[i] + road.rsu_coverage_radius_m;
    if (agent.speed_kmh <= 0.0) {
      if (road.rsu_covers(i, x0)) out.push_back({i, agent.entry_time_s, kInf});
      continue;
    }
    const double a = std::max(x0, lo);
    const double b = std::min(road.length_m, hi);
    if (a > b) continue;
    const double v = agent.speed_mps();
    out.push_back({i, agent.entry_time_s + (a - x0) / v, agent.entry_time_s + (b - x0) / v});
  }
  std::sort(out.begin(), out.end(), [](const CoverageInterval& l, const CoverageInterval& r) {
    return l.enter != r.enter ? l.enter < r.enter : l.rsu_index < r.rsu_index;
  });
  return out;
}

std::vector<Contact> coverage_contacts(const RoadModel& road, const VehicleAgent& agent) {
  std::vector<Contact> out;
  for (const auto& iv : coverage_intervals(road, agent)) out.push_back({iv.rsu_index, iv.enter});
  return out;
}

std::uint64_t run_stream_seed(std::uint64_t seed, std::uint64_t scenario_id) {
  return mix_seed(seed, scenario_id);
}

std::vector<VehicleAgent> generate_arrivals(const ScenarioConfig& config, std::uint64_t stream_seed,
                                            const p2dap::PseudonymPool* pool) {
  const std::size_t n = config.vehicles;
  if (config.attackers > n) throw Error(Errc::invariant_violation, "attackers must not exceed vehicles");
  if (pool && pool->size() < n) throw Error(Errc::invariant_violation, "pseudonym pool has fewer vehicles than the scenario");

  Rng arrivals(mix_seed(stream_seed, "arrivals"));
  std::vector<double> times(n);
  for (auto& t : times) t = std::floor(arrivals.uniform(0.0, config.sim_time_s) * 1000.0) / 1000.0;
  std::sort(times.begin(), times.end());

  std::vector<VehicleAgent> agents(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& a = agents[i];
    a.physical_id = pool ? pool->vehicles()[i].vehicle_id : default_vehicle_id(i);
    a.entry_time_s = times[i];
    a.lane = static_cast<int>(arrivals.below(static_cast<std::uint64_t>(config.road.lanes)));
    double z;
    do {
      z = arrivals.normal();
    } while (std::abs(z) > 2.5);
    a.speed_kmh = config.scenario_speed_kmh * (1.0 + 0.1 * z);
    a.beacon_period_s = config.beacon_period_s;
  }

  Rng picker(mix_seed(stream_seed, "attackers"));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < config.attackers; ++i) {
    std::swap(order[i], order[i + picker.below(n - i)]);
    agents[order[i]].kind = VehicleKind::Sybil;
  }

  Rng labels(mix_seed(stream_seed, "identities"));
  for (std::size_t i = 0; i < n; ++i) {
    auto& a = agents[i];
    const std::size_t claims = a.kind == VehicleKind::Sybil ? 1 + config.forged_count : 1;
    for (std::size_t k = 0; k < claims; ++k) {
      a.claimed_identities.push_back("id-" + to_hex(labels.bytes(6)));
      if (pool) {
        const auto& owned = pool->vehicles()[i].pseudonyms;
        if (k >= owned.size()) throw Error(Errc::invariant_violation, "vehicle " + a.physical_id + " has too few pseudonyms");
        a.pseudonyms.push_back(owned[k]);
      }
    }
  }
  return agents;
}

}  // namespace sybil::sim
