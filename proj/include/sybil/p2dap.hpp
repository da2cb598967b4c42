#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

#include "sybil/crypto.hpp"

namespace sybil::p2dap {

using crypto::CoarseValue;
using crypto::FineValue;
using crypto::HashKey;
using crypto::HashWidths;
using crypto::Pseudonym;

/// The DMV's key material for one pool year. k_c is handed to every RSB;
/// k_f never leaves the DMV.
struct DmvKeys {
  HashKey coarse;
  HashKey fine;
};

DmvKeys derive_dmv_keys(int year);

struct PoolParams {
  std::size_t n_vehicles = 1;
  std::size_t per_vehicle = 8;
  HashWidths widths{};
  std::size_t pseudonym_bytes = crypto::kDefaultPseudonymSize;
  // 0 selects the default budget, see default_draw_budget().
  std::uint64_t draw_budget = 0;
};

/// Candidate draws allowed before generation gives up. At least
/// 1000 * n * k, and at least four times the number of (coarse, fine)
/// buckets so wide selectors remain feasible.
std::uint64_t default_draw_budget(const PoolParams& params);

struct PoolVehicle {
  std::string vehicle_id;
  std::vector<Pseudonym> pseudonyms;
  CoarseValue coarse;
  std::optional<FineValue> fine;  // absent in an RSB-tier view

  bool operator==(const PoolVehicle&) const = default;
};

/// Yearly pseudonym pool. Every vehicle owns one fine-grained group: all of
/// its pseudonyms share one (coarse, fine) pair and no other vehicle holds
/// that pair.
class PseudonymPool {
 public:
  PseudonymPool() = default;
  PseudonymPool(int year, HashWidths widths, std::vector<PoolVehicle> vehicles);

  int year() const { return year_; }
  HashWidths widths() const { return widths_; }
  const std::vector<PoolVehicle>& vehicles() const { return vehicles_; }
  std::size_t size() const { return vehicles_.size(); }
  bool has_fine_view() const;

  /// Index into vehicles() of the pseudonym's owner.
  std::optional<std::size_t> owner_of(const Pseudonym& p) const;
  std::optional<CoarseValue> coarse_of(const Pseudonym& p) const;
  std::optional<FineValue> fine_of(const Pseudonym& p) const;

  /// Drops every fine value; what an RSB is allowed to see.
  PseudonymPool rsb_view() const;

  bool operator==(const PseudonymPool& other) const {
    return year_ == other.year_ && widths_ == other.widths_ && vehicles_ == other.vehicles_;
  }

 private:
  int year_ = 0;
  HashWidths widths_{};
  std::vector<PoolVehicle> vehicles_;
  std::unordered_map<Pseudonym, std::size_t> owner_;
};

/// Rejection-sampling pool construction. Candidates are drawn from a
/// counter-based stream keyed by rng_seed and bucketed by (coarse, fine);
/// the first n_vehicles buckets to collect per_vehicle members become the
/// vehicles, in completion order. The result does not depend on `threads`.
/// Throws Errc::invariant_violation for bad parameters and
/// Errc::generation_exhausted when the draw budget runs out.
PseudonymPool generate_pool(const HashKey& k_c, const HashKey& k_f, const PoolParams& params,
                            std::uint64_t rng_seed, int year = 0, unsigned threads = 0);

/// Convenience wrapper: keys and the draw stream both derived from the year.
PseudonymPool generate_yearly_pool(int year, const PoolParams& params, unsigned threads = 0);

enum class PoolTier { Dmv, Rsb };

nlohmann::json pool_to_json(const PseudonymPool& pool, PoolTier tier);
PseudonymPool pool_from_json(const nlohmann::json& doc);

// --- over-the-air observation ----------------------------------------------

struct Beacon {
  std::string claimed_identity;
  Pseudonym pseudonym;
  double timestamp = 0.0;
  double position_m = 0.0;
  double speed_kmh = 0.0;
};

struct SuspiciousReport {
  std::string rsb_id;
  double window_start = 0.0;
  double window_end = 0.0;
  CoarseValue coarse;
  // pseudonyms[0] is the pseudonym whose beacon raised the report; the rest
  // are its newly matched partners, sorted.
  std::vector<Pseudonym> pseudonyms;

  bool operator==(const SuspiciousReport&) const = default;
};

/// Per-RSB buffer of recent (pseudonym, coarse, time) observations.
class RsbObserver {
 public:
  /// Throws Errc::invalid_key unless k_c is a GlobalCoarse key.
  RsbObserver(std::string rsb_id, HashKey k_c, HashWidths widths, double tau_s = 5.0);

  /// Buffers the beacon and reports distinct same-coarse pseudonyms heard
  /// within tau. An unordered pair is reported at most once per tumbling
  /// window [k*tau, (k+1)*tau) of the triggering beacon.
  std::optional<SuspiciousReport> observe(const Beacon& beacon);

  const std::string& id() const { return id_; }
  double tau() const { return tau_; }

 private:
  struct Entry {
    Pseudonym pseudonym;
    CoarseValue coarse;
    double time;
  };

  std::string id_;
  HashKey k_c_;
  HashWidths widths_;
  double tau_;
  std::deque<Entry> buffer_;
  std::unordered_map<Pseudonym, CoarseValue> coarse_cache_;
  std::int64_t dedup_window_ = -1;
  std::set<std::pair<Pseudonym, Pseudonym>> reported_;
};

// --- DMV adjudication ----------------------------------------------------------

struct SybilGroup {
  FineValue fine;
  std::vector<Pseudonym> pseudonyms;
  bool operator==(const SybilGroup&) const = default;
};

struct Adjudication {
  enum class Verdict { Sybil, FalseAlarm };
  Verdict verdict = Verdict::FalseAlarm;
  // One entry per fine value shared by at least two reported pseudonyms.
  std::vector<SybilGroup> groups;

  bool is_sybil() const { return verdict == Verdict::Sybil; }
  bool operator==(const Adjudication&) const = default;
};

/// Recomputes fine values from the keys; the RSB's coarse claim is not
/// trusted. Registered pseudonyms are cross-checked against the pool's fine
/// view (mismatch throws Errc::consistency). Throws Errc::malformed_report
/// for fewer than two pseudonyms or a pseudonym of the wrong width.
Adjudication dmv_adjudicate(const SuspiciousReport& report, const PseudonymPool& pool_fine_view,
                            const DmvKeys& keys);

nlohmann::json report_to_json(const SuspiciousReport& report);
SuspiciousReport report_from_json(const nlohmann::json& j);
nlohmann::json adjudication_to_json(const Adjudication& adjudication);

}  // namespace sybil::p2dap
