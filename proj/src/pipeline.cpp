#include "sybil/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "sybil/error.hpp"
#include "sybil/rng.hpp"

namespace sybil::sim {

using nlohmann::json;

Deployment deploy_infrastructure(const RoadModel& road, std::uint64_t stream_seed, Rng& nonce_rng) {
  Rng secrets(mix_seed(stream_seed, "signing-secrets"));
  Deployment d;
  d.ta_key = crypto::SignatureKeyPair{footprint::kTrustAuthorityId, secrets.bytes(crypto::kDefaultKeySize)};
  d.directory.add_trust_authority(d.ta_key);
  for (std::size_t i = 0; i < road.rsu_count(); ++i) {
    crypto::SignatureKeyPair kp{road.rsu_id(i), secrets.bytes(crypto::kDefaultKeySize)};
    d.directory.add_rsu(kp);
    d.rsus.emplace_back(kp, road.rsu_positions_m[i]);
  }
  for (std::size_t i = 1; i < road.rsu_count(); ++i) d.directory.link(road.rsu_id(i - 1), road.rsu_id(i));
  for (auto& rsu : d.rsus) rsu.deploy(0.0, nonce_rng);
  for (const auto& rsu : d.rsus) {
    for (const auto& [to, announcement] : footprint::broadcast_tags(rsu, d.directory)) {
      for (auto& target : d.rsus) {
        if (target.id() == to) target.receive(announcement);
      }
    }
  }
  return d;
}

json metrics_to_json(const Metrics& m) {
  return {{"scenario_id", m.scenario_id},
          {"seed", m.seed},
          {"mode", mode_name(m.mode)},
          {"speed_kmh", m.speed_kmh},
          {"attackers_total", m.attackers_total},
          {"attackers_detected", m.attackers_detected},
          {"rate_pct", m.rate_pct},
          {"false_alarms", m.false_alarms},
          {"per_detector_counts", {{"footprint", m.footprint_count}, {"p2dap", m.p2dap_count}}}};
}

Metrics metrics_from_json(const json& j) {
  Metrics m;
  m.scenario_id = j.at("scenario_id").get<std::uint64_t>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.mode = mode_from_name(j.at("mode").get<std::string>());
  m.speed_kmh = j.at("speed_kmh").get<double>();
  m.attackers_total = j.at("attackers_total").get<std::size_t>();
  m.attackers_detected = j.at("attackers_detected").get<std::size_t>();
  m.rate_pct = j.at("rate_pct").get<double>();
  m.false_alarms = j.at("false_alarms").get<std::size_t>();
  m.footprint_count = j.at("per_detector_counts").at("footprint").get<std::size_t>();
  m.p2dap_count = j.at("per_detector_counts").at("p2dap").get<std::size_t>();
  return m;
}

DetectionPipeline::DetectionPipeline(ScenarioConfig config, const p2dap::PseudonymPool& pool,
                                     std::uint64_t scenario_id, const footprint::RsuDirectory& directory,
                                     EventSink sink)
    : config_(std::move(config)),
      pool_(pool),
      keys_(p2dap::derive_dmv_keys(config_.pool_year)),
      scenario_id_(scenario_id),
      directory_(directory),
      sink_(std::move(sink)),
      monitor_(config_.speed_window_s, config_.recheck_period_s),
      selection_{hybrid::Detector::P2dap, config_.speed_threshold_kmh} {
  for (std::size_t i = 0; i < config_.road.rsu_count(); ++i) {
    rsbs_.emplace_back(config_.road.rsu_id(i), keys_.coarse, config_.widths(), config_.tau_s);
  }
  metrics_.scenario_id = scenario_id_;
  metrics_.seed = config_.seed;
  metrics_.mode = config_.mode;
  metrics_.speed_kmh = config_.scenario_speed_kmh;
  metrics_.attackers_total = config_.attackers;
}

std::string config_digest(const json& config, std::uint64_t scenario_id) {
  return crypto::sha256_hex(config.dump() + "#" + std::to_string(scenario_id));
}

bool DetectionPipeline::is_input(const std::string& type) {
  return type == "run_start" || type == "vehicle_enter" || type == "vehicle_exit" || type == "beacon" ||
         type == "tag_issued" || type == "ta_authorized";
}

hybrid::DetectorSelection DetectionPipeline::selection() const {
  switch (config_.mode) {
    case Mode::FootprintOnly: return {hybrid::Detector::Footprint, config_.speed_threshold_kmh};
    case Mode::P2dapOnly: return {hybrid::Detector::P2dap, config_.speed_threshold_kmh};
    case Mode::Hybrid: break;
  }
  return selection_;
}

void DetectionPipeline::emit(json event) { sink_(event); }

void DetectionPipeline::start() {
  const json config = config_to_json(config_);
  emit({{"type", "run_start"},
        {"t", 0.0},
        {"scenario_id", scenario_id_},
        {"config", config},
        {"config_digest", config_digest(config, scenario_id_)}});
}

void DetectionPipeline::advance_to(double t) {
  if (config_.mode != Mode::Hybrid) return;
  const double limit = std::min(t, config_.sim_time_s);
  while (true) {
    const double at = static_cast<double>(rechecks_done_) * config_.recheck_period_s;
    if (at > limit) break;
    const double avg = monitor_.average_speed(at);
    selection_ = hybrid::select_detector(avg, config_.speed_threshold_kmh);
    emit({{"type", "controller_decision"},
          {"t", at},
          {"avg_speed_kmh", avg},
          {"active_detector", hybrid::detector_name(selection_.active)}});
    ++rechecks_done_;
  }
}

void DetectionPipeline::process(const json& input) {
  const auto type = input.at("type").get<std::string>();
  if (!is_input(type) || type == "run_start") {
    throw Error(Errc::parse, "'" + type + "' is not a detector input");
  }
  advance_to(input.at("t").get<double>());
  emit(input);
  if (type == "vehicle_enter") on_vehicle_enter(input);
  else if (type == "beacon") on_beacon(input);
  else if (type == "tag_issued") on_tag_issued(input);
  else if (type == "ta_authorized") on_tag_authorized(input);
}

void DetectionPipeline::on_vehicle_enter(const json& e) {
  const auto vehicle = e.at("vehicle_id").get<std::string>();
  kind_[vehicle] = e.at("kind").get<std::string>() == "sybil" ? VehicleKind::Sybil : VehicleKind::Honest;
  for (const auto& id : e.at("identities")) identity_owner_[id.get<std::string>()] = vehicle;
}

void DetectionPipeline::on_beacon(const json& e) {
  p2dap::Beacon beacon{e.at("identity").get<std::string>(),
                       crypto::Pseudonym{from_hex(e.at("pseudonym").get<std::string>())},
                       e.at("t").get<double>(), e.at("pos_m").get<double>(), e.at("speed_kmh").get<double>()};
  const auto covering = config_.road.rsus_covering(beacon.position_m);
  if (config_.mode == Mode::Hybrid && !covering.empty()) monitor_.add_sample(beacon.timestamp, beacon.speed_kmh);
  if (config_.mode == Mode::FootprintOnly) return;

  for (std::size_t r : covering) {
    auto report = rsbs_[r].observe(beacon);
    if (!report) continue;
    json rj = p2dap::report_to_json(*report);
    rj["type"] = "report";
    rj["t"] = beacon.timestamp;
    emit(rj);

    const auto verdict = p2dap::dmv_adjudicate(*report, pool_, keys_);
    json aj = p2dap::adjudication_to_json(verdict);
    aj["type"] = "adjudication";
    aj["t"] = beacon.timestamp;
    aj["rsb"] = report->rsb_id;
    emit(aj);
    if (!verdict.is_sybil()) {
      ++false_alarms_;
      continue;
    }
    for (const auto& group : verdict.groups) {
      std::set<std::string> owners;
      std::vector<std::string> evidence;
      for (const auto& p : group.pseudonyms) {
        auto owner = pool_.owner_of(p);
        owners.insert(owner ? pool_.vehicles()[*owner].vehicle_id : std::string("<unregistered>"));
        evidence.push_back(p.hex());
      }
      score(hybrid::Detector::P2dap, beacon.timestamp, owners, std::move(evidence));
    }
  }
}

void DetectionPipeline::on_tag_issued(const json& e) {
  if (config_.mode == Mode::P2dapOnly) return;
  footprint::LinkTag tag;
  tag.rsu_id = e.at("rsu_id").get<std::string>();
  tag.issue_time = e.at("issue_time").get<double>();
  tag.contact_nonce = from_hex(e.at("nonce").get<std::string>());
  tag.rsu_signature = crypto::Signature{from_hex(e.at("sig").get<std::string>())};
  PendingTag pending{std::move(tag), e.at("identities").get<std::vector<std::string>>()};
  pending_[pending.tag.rsu_id + "/" + e.at("nonce").get<std::string>()] = std::move(pending);
}

void DetectionPipeline::on_tag_authorized(const json& e) {
  if (config_.mode == Mode::P2dapOnly) return;
  const auto key = e.at("rsu_id").get<std::string>() + "/" + e.at("nonce").get<std::string>();
  auto it = pending_.find(key);
  if (it == pending_.end()) {
    emit({{"type", "tag_rejected"}, {"t", e.at("t")}, {"reason", "authorization without issuance"}});
    return;
  }
  PendingTag pending = std::move(it->second);
  pending_.erase(it);
  pending.tag.ta_countersignature = crypto::Signature{from_hex(e.at("ta_sig").get<std::string>())};
  const double t = e.at("t").get<double>();

  std::set<std::string> touched;
  for (const auto& identity : pending.identities) {
    auto [slot, inserted] = trajectory_index_.try_emplace(identity, trajectories_.size());
    if (inserted) trajectories_.push_back(footprint::Trajectory{identity, {}});
    try {
      footprint::append_tag(trajectories_[slot->second], pending.tag, directory_);
      touched.insert(identity);
    } catch (const Error& err) {
      emit({{"type", "tag_rejected"}, {"t", t}, {"identity", identity}, {"reason", std::string(errc_name(err.code()))}});
    }
  }
  if (touched.empty()) return;

  for (const auto& group : footprint::detect_duplicate_series(trajectories_, config_.match_length)) {
    const bool fresh = std::any_of(group.begin(), group.end(), [&](const std::string& id) { return touched.contains(id); });
    if (!fresh) continue;
    emit({{"type", "footprint_flag"}, {"t", t}, {"identities", group}});
    std::set<std::string> owners;
    for (const auto& id : group) {
      auto owner = identity_owner_.find(id);
      owners.insert(owner == identity_owner_.end() ? std::string("<unknown>") : owner->second);
    }
    score(hybrid::Detector::Footprint, t, owners, group);
  }
}

void DetectionPipeline::score(hybrid::Detector detector, double t, const std::set<std::string>& vehicles,
                              std::vector<std::string> evidence) {
  const bool attributable = vehicles.size() == 1 && kind_.contains(*vehicles.begin()) &&
                            kind_.at(*vehicles.begin()) == VehicleKind::Sybil;
  if (!attributable) {
    ++false_convictions_;
    emit({{"type", "false_conviction"},
          {"t", t},
          {"detector", hybrid::detector_name(detector)},
          {"vehicles", std::vector<std::string>(vehicles.begin(), vehicles.end())},
          {"evidence", evidence}});
    return;
  }
  hybrid::DetectionEvent event{detector, t, *vehicles.begin(), std::move(evidence)};
  const bool counted = ledger_.record(event, selection());
  if (counted) terminated_.insert(event.physical_attacker);
  emit({{"type", "detection"},
        {"t", t},
        {"detector", hybrid::detector_name(detector)},
        {"physical_attacker", event.physical_attacker},
        {"counted", counted},
        {"evidence", event.evidence}});
}

void DetectionPipeline::finish() {
  advance_to(config_.sim_time_s);
  metrics_.attackers_detected = ledger_.counted();
  metrics_.rate_pct = config_.attackers == 0 ? 0.0 : hybrid::detection_rate(ledger_.counted(), config_.attackers);
  metrics_.false_alarms = false_alarms_;
  metrics_.footprint_count = ledger_.counted_by(hybrid::Detector::Footprint);
  metrics_.p2dap_count = ledger_.counted_by(hybrid::Detector::P2dap);

  json summary = metrics_to_json(metrics_);
  summary["type"] = "run_summary";
  summary["t"] = config_.sim_time_s;
  summary["false_convictions"] = false_convictions_;
  summary["config_digest"] = config_digest(config_to_json(config_), scenario_id_);
  emit(summary);
}

}  // namespace sybil::sim
