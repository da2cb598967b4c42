#include "sybil/hybrid.hpp"

#include "sybil/error.hpp"

namespace sybil::hybrid {

std::string_view detector_name(Detector d) {
  return d == Detector::Footprint ? "footprint" : "p2dap";
}

Detector detector_from_name(std::string_view name) {
  if (name == "footprint") return Detector::Footprint;
  if (name == "p2dap") return Detector::P2dap;
  throw Error(Errc::parse, "unknown detector '" + std::string(name) + "'");
}

SpeedMonitor::SpeedMonitor(double window_s, double recheck_period_s)
    : window_(window_s), recheck_period_(recheck_period_s) {
  if (!(window_ > 0.0) || !(recheck_period_ > 0.0)) {
    throw Error(Errc::invariant_violation, "speed window and recheck period must be > 0");
  }
}

void SpeedMonitor::add_sample(double time_s, double speed_kmh) { samples_.emplace_back(time_s, speed_kmh); }

double SpeedMonitor::average_speed(double now) {
  while (!samples_.empty() && samples_.front().first <= now - window_) samples_.pop_front();
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& [t, v] : samples_) {
    if (t > now) break;
    sum += v;
    ++n;
  }
  if (n > 0) last_ = sum / static_cast<double>(n);
  return last_;
}

DetectorSelection select_detector(double avg_kmh, double threshold_kmh) {
  if (!(threshold_kmh > 0.0)) throw Error(Errc::invariant_violation, "speed threshold must be > 0");
  return {avg_kmh > threshold_kmh ? Detector::Footprint : Detector::P2dap, threshold_kmh};
}

bool DetectionLedger::record(const DetectionEvent& event, const DetectorSelection& selection) {
  const bool counted = event.detector == selection.active && !counted_.contains(event.physical_attacker);
  if (counted) {
    counted_.insert(event.physical_attacker);
    ++per_detector_[event.detector];
  }
  entries_.push_back(Entry{event, counted});
  return counted;
}

std::size_t DetectionLedger::counted_by(Detector d) const {
  auto it = per_detector_.find(d);
  return it == per_detector_.end() ? 0 : it->second;
}

double detection_rate(std::size_t counted, std::size_t total) {
  if (total == 0) throw Error(Errc::invariant_violation, "detection rate needs at least one attacker");
  if (counted > total) {
    throw Error(Errc::consistency, std::to_string(counted) + " detections exceed " + std::to_string(total) + " attackers");
  }
  return 100.0 * static_cast<double>(counted) / static_cast<double>(total);
}

}  // namespace sybil::hybrid
