#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "json.hpp"
#include "sybil/error.hpp"
#include "sybil/mobility.hpp"
#include "sybil/simulation.hpp"

using namespace sybil;
using namespace sybil::sim;
using nlohmann::json;

namespace {

ScenarioConfig small_config() {
  ScenarioConfig c;
  c.w_c = 6;
  c.w_f = 10;
  return c;
}

const p2dap::PseudonymPool& small_pool() {
  static const auto pool = p2dap::generate_yearly_pool(2019, small_config().pool_params());
  return pool;
}

std::vector<json> parse(const RunResult& r) {
  std::vector<json> out;
  for (const auto& l : r.trace_lines) out.push_back(json::parse(l));
  return out;
}

std::vector<json> of_type(const std::vector<json>& events, const std::string& type) {
  std::vector<json> out;
  for (const auto& e : events) {
    if (e["type"] == type) out.push_back(e);
  }
  return out;
}

}  // namespace

TEST_CASE("arrival plan counts") {
  ScenarioConfig c = small_config();
  c.vehicles = 0;
  c.attackers = 0;
  CHECK(generate_arrivals(c, 1).empty());

  c = small_config();
  const auto agents = generate_arrivals(c, 1, &small_pool());
  REQUIRE(agents.size() == 50);
  std::size_t sybils = 0;
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const auto& a = agents[i];
    CHECK(a.physical_id == small_pool().vehicles()[i].vehicle_id);
    CHECK(a.entry_time_s >= 0.0);
    CHECK(a.entry_time_s < c.sim_time_s);
    CHECK((a.lane == 0 || a.lane == 1));
    if (a.kind == VehicleKind::Sybil) {
      ++sybils;
      CHECK(a.claimed_identities.size() == 3);
    } else {
      CHECK(a.claimed_identities.size() == 1);
    }
    CHECK(a.pseudonyms.size() == a.claimed_identities.size());
    for (std::size_t k = 0; k < a.pseudonyms.size(); ++k) CHECK(a.pseudonyms[k] == small_pool().vehicles()[i].pseudonyms[k]);
    if (i > 0) CHECK(agents[i - 1].entry_time_s <= a.entry_time_s);
  }
  CHECK(sybils == 5);
  CHECK_THROWS_AS(generate_arrivals([] { auto x = small_config(); x.attackers = 60; return x; }(), 1), Error);
}

TEST_CASE("sampled speeds have the scenario mean and stay within 25 percent") {
  ScenarioConfig c = small_config();
  c.vehicles = 1000;
  c.attackers = 0;
  const auto agents = generate_arrivals(c, 5);
  double sum = 0.0;
  for (const auto& a : agents) {
    sum += a.speed_kmh;
    CHECK(a.speed_kmh >= 30.0);
    CHECK(a.speed_kmh <= 50.0);
  }
  CHECK(std::abs(sum / agents.size() - 40.0) <= 1.0);
}

TEST_CASE("coverage contact geometry") {
  RoadModel road;
  VehicleAgent a;
  a.speed_kmh = 20.0;
  a.entry_time_s = 3.0;
  const auto contacts = coverage_contacts(road, a);
  REQUIRE(contacts.size() == 4);
  CHECK(contacts[0] == Contact{0, 3.0});
  // RSU 1 covers from 112.5 - 75 = 37.5 m on.
  CHECK(contacts[1].rsu_index == 1);
  CHECK(contacts[1].entry_time == doctest::Approx(3.0 + 37.5 / (20.0 / 3.6)));
  CHECK(contacts[2].entry_time == doctest::Approx(3.0 + 112.5 / (20.0 / 3.6)));

  RoadModel sparse;
  sparse.rsu_positions_m = {37.5};
  sparse.rsu_coverage_radius_m = 10.0;
  VehicleAgent parked;
  parked.speed_kmh = 0.0;
  parked.entry_position_m = 200.0;
  CHECK(coverage_contacts(sparse, parked).empty());
}

TEST_CASE("closed-form contacts agree with dense position sampling") {
  RoadModel road;
  road.rsu_positions_m = {20.0, 90.0, 170.0, 260.0};
  road.rsu_coverage_radius_m = 30.0;
  Rng rng(31);
  const double step = 0.1;
  for (int i = 0; i < 200; ++i) {
    VehicleAgent a;
    a.entry_time_s = rng.uniform(0.0, 100.0);
    a.speed_kmh = rng.uniform(10.0, 100.0);
    a.entry_position_m = rng.uniform(0.0, 150.0);
    std::map<std::size_t, double> sampled;
    const double exit = a.exit_time(road);
    for (double t = a.entry_time_s; t <= exit + step; t += step) {
      const double x = a.position_at(t, road);
      for (std::size_t r = 0; r < road.rsu_count(); ++r) {
        if (std::abs(x - road.rsu_positions_m[r]) <= road.rsu_coverage_radius_m) sampled.try_emplace(r, t);
      }
    }
    const auto contacts = coverage_contacts(road, a);
    CHECK(contacts.size() == sampled.size());
    for (const auto& c : contacts) {
      REQUIRE(sampled.contains(c.rsu_index));
      CHECK(sampled[c.rsu_index] >= c.entry_time - 1e-9);
      CHECK(sampled[c.rsu_index] - c.entry_time <= step + 1e-9);
    }
    for (std::size_t k = 1; k < contacts.size(); ++k) CHECK(contacts[k - 1].entry_time <= contacts[k].entry_time);
  }
}

TEST_CASE("dwell time is inversely proportional to speed") {
  RoadModel road;
  for (double v : {20.0, 40.0, 60.0, 80.0}) {
    VehicleAgent a;
    a.speed_kmh = v;
    const auto iv = coverage_intervals(road, a);
    REQUIRE(iv.size() == 4);
    // RSU 1 at 112.5 m covers [37.5, 187.5]: 150 m of road.
    CHECK(iv[1].dwell() * (v / 3.6) == doctest::Approx(150.0));
  }
}

TEST_CASE("all-honest run convicts nobody") {
  ScenarioConfig c = small_config();
  c.attackers = 0;
  for (Mode m : {Mode::Hybrid, Mode::FootprintOnly, Mode::P2dapOnly}) {
    c.mode = m;
    const auto r = run_scenario(c, small_pool(), 3);
    const auto events = parse(r);
    CHECK(of_type(events, "detection").empty());
    CHECK(of_type(events, "footprint_flag").empty());
    CHECK(of_type(events, "false_conviction").empty());
    for (const auto& a : of_type(events, "adjudication")) CHECK(a["verdict"] == "false_alarm");
    CHECK(r.metrics.attackers_detected == 0);
    CHECK(r.metrics.rate_pct == 0.0);
    CHECK(r.metrics.false_alarms == of_type(events, "adjudication").size());
  }
}

TEST_CASE("runs are deterministic and seed-sensitive") {
  ScenarioConfig c = small_config();
  const auto a = run_scenario(c, small_pool(), 0);
  const auto b = run_scenario(c, small_pool(), 0);
  CHECK(a.trace_sha256() == b.trace_sha256());
  CHECK(a.trace_text() == b.trace_text());
  CHECK(a.metrics == b.metrics);
  CHECK(run_scenario(c, small_pool(), 1).trace_sha256() != a.trace_sha256());
  c.seed = 2;
  CHECK(run_scenario(c, small_pool(), 0).trace_sha256() != a.trace_sha256());
}

TEST_CASE("trace structure, conservation and scoring safety") {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    for (Mode m : {Mode::Hybrid, Mode::FootprintOnly, Mode::P2dapOnly}) {
      ScenarioConfig c = small_config();
      c.seed = seed;
      c.mode = m;
      const auto r = run_scenario(c, small_pool(), 0);
      const auto events = parse(r);
      REQUIRE(events.size() > 2);
      CHECK(events.front()["type"] == "run_start");
      CHECK(events.back()["type"] == "run_summary");
      CHECK(events.back()["false_convictions"] == 0);

      std::map<std::string, std::string> owner;
      std::map<std::string, double> entered, exited;
      std::set<std::string> sybils;
      std::set<std::string> nonces;
      double last = 0.0;
      for (std::size_t i = 0; i < events.size(); ++i) {
        const auto& e = events[i];
        CHECK(e["seq"] == i);
        CHECK(e["t"].get<double>() >= last);
        last = e["t"].get<double>();
        const std::string type = e["type"];
        if (type == "vehicle_enter") {
          entered[e["vehicle_id"]] = e["t"];
          if (e["kind"] == "sybil") sybils.insert(e["vehicle_id"].get<std::string>());
          for (const auto& id : e["identities"]) owner[id] = e["vehicle_id"];
        } else if (type == "vehicle_exit") {
          exited[e["vehicle_id"]] = e["t"];
        } else if (type == "beacon") {
          const auto v = owner.at(e["identity"]);
          CHECK(e["t"].get<double>() >= entered.at(v));
          CHECK_FALSE(exited.contains(v));
          CHECK(e["pos_m"].get<double>() >= 0.0);
          CHECK(e["pos_m"].get<double>() <= c.road.length_m);
        } else if (type == "tag_issued") {
          CHECK(nonces.insert(e["rsu_id"].get<std::string>() + e["nonce"].get<std::string>()).second);
          CHECK(m != Mode::P2dapOnly);
        } else if (type == "detection" && e["counted"] == true) {
          CHECK(sybils.contains(e["physical_attacker"].get<std::string>()));
        }
      }
      CHECK(sybils.size() == 5);
      const double rate = r.metrics.rate_pct;
      CHECK(std::fmod(rate, 20.0) == 0.0);
      CHECK(r.metrics.attackers_detected <= 5);
    }
  }
}

TEST_CASE("a Sybil vehicle's identities receive one shared tag per contact") {
  ScenarioConfig c = small_config();
  c.mode = Mode::FootprintOnly;
  const auto events = parse(run_scenario(c, small_pool(), 0));
  std::size_t shared = 0;
  for (const auto& e : of_type(events, "tag_issued")) {
    if (e["identities"].size() > 1) ++shared;
  }
  CHECK(shared > 0);
  CHECK_FALSE(of_type(events, "footprint_flag").empty());
}

TEST_CASE("modes share the arrival plan for a seed") {
  ScenarioConfig c = small_config();
  std::vector<std::vector<json>> enters, primary_beacons;
  for (Mode m : {Mode::Hybrid, Mode::FootprintOnly, Mode::P2dapOnly}) {
    c.mode = m;
    const auto events = parse(run_scenario(c, small_pool(), 7));
    std::set<std::string> primary;
    std::vector<json> en, pb;
    for (auto e : events) {
      e.erase("seq");
      if (e["type"] == "vehicle_enter") {
        primary.insert(e["identities"][0].get<std::string>());
        en.push_back(e);
      } else if (e["type"] == "beacon" && primary.contains(e["identity"].get<std::string>())) {
        pb.push_back(e);
      }
    }
    enters.push_back(en);
    primary_beacons.push_back(pb);
  }
  CHECK(enters[0] == enters[1]);
  CHECK(enters[1] == enters[2]);
  CHECK(primary_beacons[0] == primary_beacons[1]);
  CHECK(primary_beacons[1] == primary_beacons[2]);
}

TEST_CASE("controller decisions match a brute-force recomputation from the trace") {
  ScenarioConfig c = small_config();
  for (double speed : {30.0, 40.0, 45.0}) {
    c.scenario_speed_kmh = speed;
    const auto events = parse(run_scenario(c, small_pool(), 2));
    std::vector<std::pair<double, double>> samples;  // beacons seen so far, in trace order
    double previous = 0.0;
    std::string active = "p2dap";
    std::size_t decisions = 0;
    for (const auto& e : events) {
      if (e["type"] == "beacon") {
        if (!c.road.rsus_covering(e["pos_m"]).empty()) samples.emplace_back(e["t"], e["speed_kmh"]);
      } else if (e["type"] == "controller_decision") {
        const double t = e["t"];
        CHECK(std::fmod(t, c.recheck_period_s) == 0.0);
        double sum = 0.0;
        int n = 0;
        for (const auto& [ts, v] : samples) {
          if (ts > t - c.speed_window_s && ts <= t) {
            sum += v;
            ++n;
          }
        }
        const double avg = n ? sum / n : previous;
        CHECK(e["avg_speed_kmh"].get<double>() == doctest::Approx(avg));
        previous = avg;
        active = avg > c.speed_threshold_kmh ? "footprint" : "p2dap";
        CHECK(e["active_detector"] == active);
        ++decisions;
      } else if (e["type"] == "detection" && e["counted"] == true) {
        CHECK(e["detector"] == active);
      }
    }
    CHECK(decisions == 91);
  }
}

TEST_CASE("invalid configs and mismatched pools are rejected") {
  ScenarioConfig c = small_config();
  c.attackers = 51;
  try {
    run_scenario(c, small_pool());
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.is_config_error());
  }
  c = small_config();
  c.w_f = 11;
  CHECK_THROWS_AS(run_scenario(c, small_pool()), Error);
  c = small_config();
  c.pool_year = 2020;
  CHECK_THROWS_AS(run_scenario(c, small_pool()), Error);
  c = small_config();
  c.vehicles = 200;
  CHECK_THROWS_AS(run_scenario(c, small_pool()), Error);
  CHECK_THROWS_AS(run_scenario(c, small_pool().rsb_view()), Error);
}

TEST_CASE("metrics JSON") {
  const auto r = run_scenario(small_config(), small_pool(), 4);
  const auto j = metrics_to_json(r.metrics);
  for (const char* key : {"scenario_id", "seed", "mode", "speed_kmh", "attackers_total", "attackers_detected", "rate_pct",
                          "false_alarms", "per_detector_counts"}) {
    CHECK(j.contains(key));
  }
  CHECK(j["per_detector_counts"].contains("footprint"));
  CHECK(metrics_from_json(j) == r.metrics);
  CHECK(j["scenario_id"] == 4);
}
