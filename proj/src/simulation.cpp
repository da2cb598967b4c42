#include "sybil/simulation.hpp"

#include <queue>
#include <tuple>

#include "sybil/error.hpp"
#include "sybil/rng.hpp"

namespace sybil::sim {

using nlohmann::json;

namespace {

enum class Kind { Enter = 0, Contact = 1, Beacon = 2, Exit = 3 };

struct Scheduled {
  double time;
  Kind kind;
  std::uint64_t order;
  std::size_t vehicle;
  std::size_t detail;  // RSU index for contacts, beacon counter for beacons

  bool operator>(const Scheduled& o) const {
    return std::tie(time, kind, order) > std::tie(o.time, o.kind, o.order);
  }
};

std::vector<std::string> pseudonym_hexes(const VehicleAgent& a) {
  std::vector<std::string> out;
  for (const auto& p : a.pseudonyms) out.push_back(p.hex());
  return out;
}

class Simulation {
 public:
  Simulation(const ScenarioConfig& config, const p2dap::PseudonymPool& pool, std::uint64_t scenario_id)
      : config_(config),
        stream_(run_stream_seed(config.seed, scenario_id)),
        nonces_(mix_seed(stream_, "nonces")),
        deployment_(deploy_infrastructure(config.road, stream_, nonces_)),
        agents_(generate_arrivals(config, stream_, &pool)),
        pipeline_(config, pool, scenario_id, deployment_.directory, [this](const json& e) { write(e); }) {}

  RunResult run() {
    pipeline_.start();
    for (std::size_t v = 0; v < agents_.size(); ++v) {
      if (agents_[v].entry_time_s <= config_.sim_time_s) push(agents_[v].entry_time_s, Kind::Enter, v, 0);
    }
    while (!queue_.empty()) {
      const Scheduled ev = queue_.top();
      queue_.pop();
      switch (ev.kind) {
        case Kind::Enter: enter(ev); break;
        case Kind::Contact: contact(ev); break;
        case Kind::Beacon: beacon(ev); break;
        case Kind::Exit:
          pipeline_.process({{"type", "vehicle_exit"}, {"t", ev.time}, {"vehicle_id", agents_[ev.vehicle].physical_id}});
          break;
      }
    }
    pipeline_.finish();
    result_.metrics = pipeline_.metrics();
    return std::move(result_);
  }

 private:
  void write(const json& event) {
    json line = event;
    line["seq"] = seq_++;
    result_.trace_lines.push_back(line.dump());
  }

  void push(double t, Kind kind, std::size_t vehicle, std::size_t detail) {
    queue_.push(Scheduled{t, kind, order_++, vehicle, detail});
  }

  // Claimed identities still active: an attacker whose detection was acted
  // on stops forging and keeps only its own identity.
  std::size_t active_claims(const VehicleAgent& a) const {
    return pipeline_.terminated(a.physical_id) ? 1 : a.claimed_identities.size();
  }

  void enter(const Scheduled& ev) {
    const auto& a = agents_[ev.vehicle];
    pipeline_.process({{"type", "vehicle_enter"},
                       {"t", ev.time},
                       {"vehicle_id", a.physical_id},
                       {"kind", a.kind == VehicleKind::Sybil ? "sybil" : "honest"},
                       {"lane", a.lane},
                       {"speed_kmh", a.speed_kmh},
                       {"entry_pos_m", a.entry_position_m},
                       {"identities", a.claimed_identities},
                       {"pseudonyms", pseudonym_hexes(a)}});
    const double exit = a.exit_time(config_.road);
    if (config_.mode != Mode::P2dapOnly) {
      for (const auto& c : coverage_contacts(config_.road, a)) {
        if (c.entry_time <= exit && c.entry_time <= config_.sim_time_s) push(c.entry_time, Kind::Contact, ev.vehicle, c.rsu_index);
      }
    }
    if (a.entry_time_s < exit) push(a.entry_time_s, Kind::Beacon, ev.vehicle, 0);
    if (exit <= config_.sim_time_s) push(exit, Kind::Exit, ev.vehicle, 0);
  }

  void contact(const Scheduled& ev) {
    const auto& a = agents_[ev.vehicle];
    const auto& rsu = deployment_.rsus[ev.detail];
    const auto issued = rsu.issue_tag(ev.time, nonces_);
    const auto authorized = footprint::ta_authorize(issued, deployment_.directory, deployment_.ta_key);
    // One tag per physical contact, handed to every identity the OBU claims.
    const std::vector<std::string> identities(a.claimed_identities.begin(),
                                              a.claimed_identities.begin() + static_cast<std::ptrdiff_t>(active_claims(a)));
    const auto nonce = to_hex(issued.contact_nonce);
    pipeline_.process({{"type", "tag_issued"},
                       {"t", ev.time},
                       {"rsu_id", issued.rsu_id},
                       {"issue_time", issued.issue_time},
                       {"nonce", nonce},
                       {"sig", to_hex(issued.rsu_signature.bytes)},
                       {"identities", identities}});
    pipeline_.process({{"type", "ta_authorized"},
                       {"t", ev.time},
                       {"rsu_id", issued.rsu_id},
                       {"nonce", nonce},
                       {"ta_sig", to_hex(authorized.ta_countersignature->bytes)}});
  }

  void beacon(const Scheduled& ev) {
    const auto& a = agents_[ev.vehicle];
    const double pos = a.position_at(ev.time, config_.road);
    for (std::size_t k = 0; k < a.claimed_identities.size(); ++k) {
      if (k >= active_claims(a)) break;
      pipeline_.process({{"type", "beacon"},
                         {"t", ev.time},
                         {"identity", a.claimed_identities[k]},
                         {"pseudonym", a.pseudonyms[k].hex()},
                         {"pos_m", pos},
                         {"speed_kmh", a.speed_kmh}});
    }
    const std::size_t next = ev.detail + 1;
    const double t_next = a.entry_time_s + static_cast<double>(next) * a.beacon_period_s;
    if (t_next < a.exit_time(config_.road) && t_next <= config_.sim_time_s) push(t_next, Kind::Beacon, ev.vehicle, next);
  }

  const ScenarioConfig& config_;
  std::uint64_t stream_;
  Rng nonces_;
  Deployment deployment_;
  std::vector<VehicleAgent> agents_;
  DetectionPipeline pipeline_;
  std::priority_queue<Scheduled, std::vector<Scheduled>, std::greater<>> queue_;
  std::uint64_t order_ = 0;
  std::uint64_t seq_ = 0;
  RunResult result_;
};

}  // namespace

std::string RunResult::trace_text() const {
  std::string out;
  for (const auto& line : trace_lines) {
    out += line;
    out += '\n';
  }
  return out;
}

std::string RunResult::trace_sha256() const { return crypto::sha256_hex(trace_text()); }

void check_pool_compatible(const ScenarioConfig& config, const p2dap::PseudonymPool& pool) {
  auto fail = [](const std::string& what) { throw Error(Errc::invariant_violation, "pool mismatch: " + what); };
  if (pool.year() != config.pool_year) fail("pool year " + std::to_string(pool.year()) + " != config pool_year " + std::to_string(config.pool_year));
  if (pool.widths() != config.widths()) fail("hash widths differ from the config");
  if (pool.size() < config.vehicles) fail("pool has " + std::to_string(pool.size()) + " vehicles, config needs " + std::to_string(config.vehicles));
  if (!pool.has_fine_view()) fail("scenario runs need the DMV-tier pool (fine values)");
  const std::size_t needed = config.attackers > 0 ? 1 + config.forged_count : 1;
  for (std::size_t i = 0; i < config.vehicles; ++i) {
    if (pool.vehicles()[i].pseudonyms.size() < needed) fail("vehicle " + pool.vehicles()[i].vehicle_id + " has too few pseudonyms");
  }
}

RunResult run_scenario(const ScenarioConfig& config, const p2dap::PseudonymPool& pool, std::uint64_t scenario_id) {
  config.validate();
  check_pool_compatible(config, pool);
  Simulation sim(config, pool, scenario_id);
  return sim.run();
}

RunResult run_scenario(const ScenarioConfig& config, std::uint64_t scenario_id) {
  config.validate();
  const auto pool = p2dap::generate_yearly_pool(config.pool_year, config.pool_params());
  return run_scenario(config, pool, scenario_id);
}

}  // namespace sybil::sim
