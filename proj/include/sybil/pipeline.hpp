#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "sybil/config.hpp"
#include "sybil/footprint.hpp"
#include "sybil/hybrid.hpp"
#include "sybil/mobility.hpp"
#include "sybil/p2dap.hpp"

namespace sybil::sim {

/// Receives trace events (without sequence numbers) in emission order.
using EventSink = std::function<void(const nlohmann::json&)>;

/// RSUs, their neighbor graph and the TA-held signer registry.
struct Deployment {
  std::vector<footprint::Rsu> rsus;
  footprint::RsuDirectory directory;
  crypto::SignatureKeyPair ta_key;
};

/// Registers every RSU and the TA, links RSUs adjacent along the road, and
/// runs the announcement broadcast. Signing secrets derive from the stream
/// seed; announcement nonces come from `nonce_rng`.
Deployment deploy_infrastructure(const RoadModel& road, std::uint64_t stream_seed, Rng& nonce_rng);

struct Metrics {
  std::uint64_t scenario_id = 0;
  std::uint64_t seed = 0;
  Mode mode = Mode::Hybrid;
  double speed_kmh = 0.0;
  std::size_t attackers_total = 0;
  std::size_t attackers_detected = 0;
  double rate_pct = 0.0;
  std::size_t false_alarms = 0;
  std::size_t footprint_count = 0;
  std::size_t p2dap_count = 0;

  bool operator==(const Metrics&) const = default;
};

/// Seals a run's config into run_start and run_summary.
std::string config_digest(const nlohmann::json& config, std::uint64_t scenario_id);

nlohmann::json metrics_to_json(const Metrics& m);
Metrics metrics_from_json(const nlohmann::json& j);

/// Detector wiring shared by the simulator and trace replay. Input events
/// (vehicle_enter, vehicle_exit, beacon, tag_issued, ta_authorized) are
/// echoed to the sink and then fed to the detectors; every detector output
/// and controller decision goes to the sink right after the input that
/// caused it.
///
/// Detectors only see over-the-air data. Ground truth from vehicle_enter
/// (kind, identities) is read by the scoring step alone.
class DetectionPipeline {
 public:
  DetectionPipeline(ScenarioConfig config, const p2dap::PseudonymPool& pool, std::uint64_t scenario_id,
                    const footprint::RsuDirectory& directory, EventSink sink);

  /// Emits run_start.
  void start();
  void process(const nlohmann::json& input);
  /// Runs the remaining controller rechecks and emits run_summary.
  void finish();

  bool terminated(const std::string& physical_id) const { return terminated_.contains(physical_id); }
  const Metrics& metrics() const { return metrics_; }
  const hybrid::DetectionLedger& ledger() const { return ledger_; }
  hybrid::DetectorSelection selection() const;
  std::size_t false_convictions() const { return false_convictions_; }

  static bool is_input(const std::string& type);

 private:
  struct PendingTag {
    footprint::LinkTag tag;
    std::vector<std::string> identities;
  };

  void advance_to(double t);
  void emit(nlohmann::json event);
  void on_vehicle_enter(const nlohmann::json& e);
  void on_beacon(const nlohmann::json& e);
  void on_tag_issued(const nlohmann::json& e);
  void on_tag_authorized(const nlohmann::json& e);
  void score(hybrid::Detector detector, double t, const std::set<std::string>& vehicles,
             std::vector<std::string> evidence);

  ScenarioConfig config_;
  const p2dap::PseudonymPool& pool_;
  p2dap::DmvKeys keys_;
  std::uint64_t scenario_id_;
  const footprint::RsuDirectory& directory_;
  EventSink sink_;

  std::vector<p2dap::RsbObserver> rsbs_;
  hybrid::SpeedMonitor monitor_;
  hybrid::DetectorSelection selection_;
  std::uint64_t rechecks_done_ = 0;

  std::vector<footprint::Trajectory> trajectories_;
  std::map<std::string, std::size_t> trajectory_index_;
  std::map<std::string, PendingTag> pending_;  // keyed by rsu_id + nonce

  std::map<std::string, std::string> identity_owner_;
  std::map<std::string, VehicleKind> kind_;
  hybrid::DetectionLedger ledger_;
  std::set<std::string> terminated_;
  std::size_t false_alarms_ = 0;
  std::size_t false_convictions_ = 0;
  Metrics metrics_;
};

}  // namespace sybil::sim
