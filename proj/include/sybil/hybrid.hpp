#pragma once

#include <deque>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace sybil::hybrid {

enum class Detector { Footprint, P2dap };

std::string_view detector_name(Detector d);
Detector detector_from_name(std::string_view name);

/// Sliding-window mean of speeds heard from vehicles in RSU coverage.
class SpeedMonitor {
 public:
  explicit SpeedMonitor(double window_s = 30.0, double recheck_period_s = 10.0);

  void add_sample(double time_s, double speed_kmh);

  /// Mean over samples with time in (now - window, now]. An empty window
  /// returns the previous result (0 before any measurement).
  double average_speed(double now);

  double window() const { return window_; }
  double recheck_period() const { return recheck_period_; }

 private:
  double window_;
  double recheck_period_;
  std::deque<std::pair<double, double>> samples_;
  double last_ = 0.0;
};

struct DetectorSelection {
  Detector active = Detector::P2dap;
  double threshold_kmh = 40.0;
};

/// Footprint iff avg > threshold; the boundary stays on P2DAP. Throws
/// Errc::invariant_violation for a non-positive threshold.
DetectorSelection select_detector(double avg_kmh, double threshold_kmh);

struct DetectionEvent {
  Detector detector = Detector::P2dap;
  double time = 0.0;
  std::string physical_attacker;
  std::vector<std::string> evidence;  // pseudonyms (hex) or identity labels
};

/// Per-run record of detections; each physical attacker counts once.
class DetectionLedger {
 public:
  struct Entry {
    DetectionEvent event;
    bool counted = false;
  };

  /// Counts the event iff it comes from the active detector and its
  /// attacker is not yet counted. Every event is kept in entries().
  bool record(const DetectionEvent& event, const DetectorSelection& selection);

  std::size_t counted() const { return counted_.size(); }
  const std::set<std::string>& counted_attackers() const { return counted_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t counted_by(Detector d) const;

 private:
  std::set<std::string> counted_;
  std::map<Detector, std::size_t> per_detector_;
  std::vector<Entry> entries_;
};

/// 100 * counted / total. Throws Errc::consistency when counted > total and
/// Errc::invariant_violation when total is zero.
double detection_rate(std::size_t counted, std::size_t total);

}  // namespace sybil::hybrid
