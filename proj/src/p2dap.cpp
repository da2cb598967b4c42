#include "sybil/p2dap.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "sybil/error.hpp"
#include "sybil/rng.hpp"

namespace sybil::p2dap {

using crypto::KeyRole;

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(Errc::invariant_violation, what);
}

HashKey key_from_stream(KeyRole role, Rng& rng) {
  return HashKey{role, rng.bytes(crypto::kDefaultKeySize)};
}

// Counter-based candidate stream: candidate i depends only on (seed, i), so
// any partition of the index space across threads yields the same pool.
void fill_candidate(std::uint64_t seed, std::uint64_t index, std::span<std::uint8_t> out) {
  const std::uint64_t base = mix_seed(seed, index);
  for (std::size_t i = 0; i < out.size(); i += 8) {
    std::uint64_t v = splitmix64(base + (i / 8) * 0x9e3779b97f4a7c15ULL);
    for (std::size_t j = i; j < out.size() && j < i + 8; ++j) {
      out[j] = static_cast<std::uint8_t>(v & 0xff);
      v >>= 8;
    }
  }
}

Pseudonym candidate(std::uint64_t seed, std::uint64_t index, std::size_t width) {
  Pseudonym p;
  p.bytes.resize(width);
  fill_candidate(seed, index, p.bytes);
  return p;
}

std::uint32_t bucket_of(const HashKey& k_c, const HashKey& k_f, std::span<const std::uint8_t> p,
                        HashWidths widths) {
  const auto stage1 = crypto::keyed_hash(k_c, p);
  const auto stage2 = crypto::keyed_hash(k_f, stage1);
  const std::uint32_t coarse = crypto::extract_bits(stage1, widths.coarse_selector());
  const std::uint32_t fine = crypto::extract_bits(stage2, widths.fine_selector());
  return static_cast<std::uint32_t>((std::uint64_t{coarse} << widths.fine) | fine);
}

// Saturating per-bucket counters; dense for narrow selectors.
class BucketCounts {
 public:
  explicit BucketCounts(unsigned bits) {
    if (bits <= 26) dense_.assign(std::size_t{1} << bits, 0);
  }

  unsigned bump(std::uint32_t bucket) {
    std::uint8_t& c = dense_.empty() ? sparse_[bucket] : dense_[bucket];
    if (c < 255) ++c;
    return c;
  }

 private:
  std::vector<std::uint8_t> dense_;
  std::unordered_map<std::uint32_t, std::uint8_t> sparse_;
};

}  // namespace

DmvKeys derive_dmv_keys(int year) {
  Rng rng(mix_seed(static_cast<std::uint64_t>(year), "dmv-keys"));
  DmvKeys keys;
  keys.coarse = key_from_stream(KeyRole::GlobalCoarse, rng);
  keys.fine = key_from_stream(KeyRole::DmvFine, rng);
  return keys;
}

std::uint64_t default_draw_budget(const PoolParams& params) {
  const std::uint64_t by_demand = 1000ULL * params.n_vehicles * params.per_vehicle;
  const unsigned bits = params.widths.coarse + params.widths.fine;
  const std::uint64_t by_buckets = bits >= 60 ? ~0ULL : (std::uint64_t{4} << bits);
  return std::max(by_demand, by_buckets);
}

PseudonymPool::PseudonymPool(int year, HashWidths widths, std::vector<PoolVehicle> vehicles)
    : year_(year), widths_(widths), vehicles_(std::move(vehicles)) {
  for (std::size_t v = 0; v < vehicles_.size(); ++v) {
    for (const auto& p : vehicles_[v].pseudonyms) {
      if (!owner_.emplace(p, v).second) {
        throw Error(Errc::consistency, "pseudonym " + p.hex() + " assigned to two vehicles");
      }
    }
  }
}

bool PseudonymPool::has_fine_view() const {
  return std::all_of(vehicles_.begin(), vehicles_.end(),
                     [](const PoolVehicle& v) { return v.fine.has_value(); });
}

std::optional<std::size_t> PseudonymPool::owner_of(const Pseudonym& p) const {
  auto it = owner_.find(p);
  if (it == owner_.end()) return std::nullopt;
  return it->second;
}

std::optional<CoarseValue> PseudonymPool::coarse_of(const Pseudonym& p) const {
  auto owner = owner_of(p);
  if (!owner) return std::nullopt;
  return vehicles_[*owner].coarse;
}

std::optional<FineValue> PseudonymPool::fine_of(const Pseudonym& p) const {
  auto owner = owner_of(p);
  if (!owner) return std::nullopt;
  return vehicles_[*owner].fine;
}

PseudonymPool PseudonymPool::rsb_view() const {
  auto copy = vehicles_;
  for (auto& v : copy) v.fine.reset();
  return PseudonymPool(year_, widths_, std::move(copy));
}

PseudonymPool generate_pool(const HashKey& k_c, const HashKey& k_f, const PoolParams& params,
                            std::uint64_t rng_seed, int year, unsigned threads) {
  const HashWidths w = params.widths;
  require(params.n_vehicles >= 1, "n_vehicles must be >= 1");
  require(params.per_vehicle >= 1 && params.per_vehicle <= 255, "per_vehicle must be in [1, 255]");
  require(params.pseudonym_bytes >= 1, "pseudonym width must be >= 1 byte");
  require(w.coarse >= 1 && w.fine >= 1, "hash widths must be >= 1 bit");
  require(w.coarse + w.fine <= 32, "w_c + w_f must be <= 32 bits");
  require((std::uint64_t{1} << (w.coarse + w.fine)) >= params.n_vehicles,
          "2^(w_c + w_f) must be >= n_vehicles");
  if (k_c.role != KeyRole::GlobalCoarse) throw Error(Errc::invalid_key, "k_c must be a GlobalCoarse key");
  if (k_f.role != KeyRole::DmvFine) throw Error(Errc::invalid_key, "k_f must be a DmvFine key");
  if (k_c.bytes.empty() || k_f.bytes.empty()) throw Error(Errc::invalid_key, "empty hash key");

  const std::uint64_t budget = params.draw_budget ? params.draw_budget : default_draw_budget(params);
  const std::size_t width = params.pseudonym_bytes;
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());

  constexpr std::uint64_t kChunk = 1u << 18;
  BucketCounts counts(w.coarse + w.fine);
  std::vector<std::uint32_t> buckets;  // bucket id of every processed candidate
  std::vector<std::uint32_t> completed;
  std::uint64_t next = 0;
  std::uint64_t stop = 0;
  bool done = false;

  while (!done) {
    if (next >= budget) {
      throw Error(Errc::generation_exhausted,
                  std::to_string(completed.size()) + " of " + std::to_string(params.n_vehicles) +
                      " fine groups filled after " + std::to_string(budget) + " draws");
    }
    const std::uint64_t count = std::min(kChunk, budget - next);
    const std::size_t offset = buckets.size();
    buckets.resize(offset + count);
    auto work = [&](std::uint64_t lo, std::uint64_t hi) {
      std::vector<std::uint8_t> scratch(width);
      for (std::uint64_t i = lo; i < hi; ++i) {
        fill_candidate(rng_seed, next + i, scratch);
        buckets[offset + i] = bucket_of(k_c, k_f, scratch, w);
      }
    };
    if (threads == 1) {
      work(0, count);
    } else {
      std::vector<std::jthread> pool;
      const std::uint64_t step = (count + threads - 1) / threads;
      for (std::uint64_t lo = 0; lo < count; lo += step) pool.emplace_back(work, lo, std::min(count, lo + step));
    }
    for (std::uint64_t i = 0; i < count; ++i) {
      const std::uint32_t b = buckets[offset + i];
      if (counts.bump(b) == params.per_vehicle) {
        completed.push_back(b);
        if (completed.size() == params.n_vehicles) {
          stop = next + i + 1;
          done = true;
          break;
        }
      }
    }
    next += count;
  }

  std::unordered_map<std::uint32_t, std::size_t> slot;
  // Bloom-style prefilter so the collection pass rarely touches the map.
  std::vector<bool> maybe(std::size_t{1} << 20);
  for (std::size_t v = 0; v < completed.size(); ++v) {
    slot.emplace(completed[v], v);
    maybe[completed[v] & 0xfffff] = true;
  }

  std::vector<PoolVehicle> vehicles(completed.size());
  const std::size_t id_width = std::max<std::size_t>(4, std::to_string(completed.size() - 1).size());
  for (std::size_t v = 0; v < completed.size(); ++v) {
    std::string digits = std::to_string(v);
    vehicles[v].vehicle_id = "veh-" + std::string(id_width - digits.size(), '0') + digits;
    vehicles[v].coarse = CoarseValue{completed[v] >> w.fine};
    vehicles[v].fine = FineValue{completed[v] & ((w.fine == 32) ? ~0u : ((1u << w.fine) - 1u))};
    vehicles[v].pseudonyms.reserve(params.per_vehicle);
  }
  for (std::uint64_t i = 0; i < stop; ++i) {
    if (!maybe[buckets[i] & 0xfffff]) continue;
    auto it = slot.find(buckets[i]);
    if (it == slot.end()) continue;
    auto& members = vehicles[it->second].pseudonyms;
    if (members.size() < params.per_vehicle) members.push_back(candidate(rng_seed, i, width));
  }
  return PseudonymPool(year, w, std::move(vehicles));
}

PseudonymPool generate_yearly_pool(int year, const PoolParams& params, unsigned threads) {
  const DmvKeys keys = derive_dmv_keys(year);
  return generate_pool(keys.coarse, keys.fine, params,
                       mix_seed(static_cast<std::uint64_t>(year), "dmv-pool"), year, threads);
}

nlohmann::json pool_to_json(const PseudonymPool& pool, PoolTier tier) {
  nlohmann::json vehicles = nlohmann::json::array();
  for (const auto& v : pool.vehicles()) {
    nlohmann::json entry;
    entry["vehicle_id"] = v.vehicle_id;
    nlohmann::json ps = nlohmann::json::array();
    for (const auto& p : v.pseudonyms) ps.push_back(p.hex());
    entry["pseudonyms"] = std::move(ps);
    entry["coarse"] = v.coarse.value;
    if (tier == PoolTier::Dmv) {
      if (!v.fine) throw Error(Errc::consistency, "DMV-tier export of a pool without fine values");
      entry["fine"] = v.fine->value;
    }
    vehicles.push_back(std::move(entry));
  }
  return nlohmann::json{{"year", pool.year()},
                        {"w_c", pool.widths().coarse},
                        {"w_f", pool.widths().fine},
                        {"vehicles", std::move(vehicles)}};
}

PseudonymPool pool_from_json(const nlohmann::json& doc) {
  try {
    HashWidths widths{doc.at("w_c").get<unsigned>(), doc.at("w_f").get<unsigned>()};
    std::vector<PoolVehicle> vehicles;
    for (const auto& entry : doc.at("vehicles")) {
      PoolVehicle v;
      v.vehicle_id = entry.at("vehicle_id").get<std::string>();
      for (const auto& hex : entry.at("pseudonyms")) v.pseudonyms.push_back(Pseudonym{from_hex(hex.get<std::string>())});
      v.coarse = CoarseValue{entry.at("coarse").get<std::uint32_t>()};
      if (entry.contains("fine")) v.fine = FineValue{entry.at("fine").get<std::uint32_t>()};
      vehicles.push_back(std::move(v));
    }
    return PseudonymPool(doc.at("year").get<int>(), widths, std::move(vehicles));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, std::string("pool document: ") + e.what());
  }
}

// --- RSB -------------------------------------------------------------------

RsbObserver::RsbObserver(std::string rsb_id, HashKey k_c, HashWidths widths, double tau_s)
    : id_(std::move(rsb_id)), k_c_(std::move(k_c)), widths_(widths), tau_(tau_s) {
  if (k_c_.role != KeyRole::GlobalCoarse) {
    throw Error(Errc::invalid_key, "an RSB only ever holds the global coarse key");
  }
  if (k_c_.bytes.empty()) throw Error(Errc::invalid_key, "empty hash key");
  if (!(tau_ > 0.0)) throw Error(Errc::invariant_violation, "tau must be > 0");
}

std::optional<SuspiciousReport> RsbObserver::observe(const Beacon& beacon) {
  const double t = beacon.timestamp;
  auto cached = coarse_cache_.find(beacon.pseudonym);
  if (cached == coarse_cache_.end()) {
    cached = coarse_cache_.emplace(beacon.pseudonym, crypto::coarse_of(k_c_, beacon.pseudonym, widths_)).first;
  }
  const CoarseValue coarse = cached->second;

  const auto window = static_cast<std::int64_t>(std::floor(t / tau_));
  if (window != dedup_window_) {
    reported_.clear();
    dedup_window_ = window;
  }
  while (!buffer_.empty() && t - buffer_.front().time > tau_) buffer_.pop_front();

  std::set<Pseudonym> partners;
  double earliest = t;
  for (const auto& e : buffer_) {
    if (e.coarse != coarse || e.pseudonym == beacon.pseudonym) continue;
    auto key = std::minmax(e.pseudonym, beacon.pseudonym);
    if (reported_.contains({key.first, key.second})) continue;
    partners.insert(e.pseudonym);
    earliest = std::min(earliest, e.time);
  }
  buffer_.push_back(Entry{beacon.pseudonym, coarse, t});
  if (partners.empty()) return std::nullopt;

  SuspiciousReport report{id_, earliest, t, coarse, {beacon.pseudonym}};
  for (const auto& q : partners) {
    auto key = std::minmax(q, beacon.pseudonym);
    reported_.insert({key.first, key.second});
    report.pseudonyms.push_back(q);
  }
  return report;
}

// --- DMV -------------------------------------------------------------------

Adjudication dmv_adjudicate(const SuspiciousReport& report, const PseudonymPool& pool_fine_view,
                            const DmvKeys& keys) {
  if (report.pseudonyms.size() < 2) throw Error(Errc::malformed_report, "fewer than two pseudonyms");
  std::size_t width = report.pseudonyms.front().bytes.size();
  if (!pool_fine_view.vehicles().empty() && !pool_fine_view.vehicles().front().pseudonyms.empty()) {
    width = pool_fine_view.vehicles().front().pseudonyms.front().bytes.size();
  }
  const HashWidths widths = pool_fine_view.widths();

  std::map<FineValue, std::set<Pseudonym>> by_fine;
  for (const auto& p : report.pseudonyms) {
    if (p.bytes.size() != width) {
      throw Error(Errc::malformed_report, "pseudonym " + p.hex() + " has width " +
                                              std::to_string(p.bytes.size()) + ", expected " +
                                              std::to_string(width));
    }
    const auto stage1 = crypto::coarse_digest(keys.coarse, p);
    if (crypto::extract_coarse(stage1, widths.coarse_selector()) != report.coarse) {
      throw Error(Errc::malformed_report, "pseudonym " + p.hex() + " is not in the reported coarse group");
    }
    const FineValue fine = crypto::extract_fine(crypto::fine_digest(keys.fine, stage1), widths.fine_selector());
    if (auto stored = pool_fine_view.fine_of(p); stored && *stored != fine) {
      throw Error(Errc::consistency, "pool fine value disagrees with recomputation for " + p.hex());
    }
    by_fine[fine].insert(p);
  }

  Adjudication result;
  for (auto& [fine, members] : by_fine) {
    if (members.size() < 2) continue;
    result.groups.push_back(SybilGroup{fine, {members.begin(), members.end()}});
  }
  result.verdict = result.groups.empty() ? Adjudication::Verdict::FalseAlarm : Adjudication::Verdict::Sybil;
  return result;
}

nlohmann::json report_to_json(const SuspiciousReport& report) {
  nlohmann::json ps = nlohmann::json::array();
  for (const auto& p : report.pseudonyms) ps.push_back(p.hex());
  return {{"rsb", report.rsb_id},
          {"window_start", report.window_start},
          {"window_end", report.window_end},
          {"coarse", report.coarse.value},
          {"pseudonyms", std::move(ps)}};
}

SuspiciousReport report_from_json(const nlohmann::json& j) {
  SuspiciousReport r;
  r.rsb_id = j.at("rsb").get<std::string>();
  r.window_start = j.at("window_start").get<double>();
  r.window_end = j.at("window_end").get<double>();
  r.coarse = CoarseValue{j.at("coarse").get<std::uint32_t>()};
  for (const auto& hex : j.at("pseudonyms")) r.pseudonyms.push_back(Pseudonym{from_hex(hex.get<std::string>())});
  return r;
}

nlohmann::json adjudication_to_json(const Adjudication& adjudication) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : adjudication.groups) {
    nlohmann::json ps = nlohmann::json::array();
    for (const auto& p : g.pseudonyms) ps.push_back(p.hex());
    groups.push_back({{"fine", g.fine.value}, {"pseudonyms", std::move(ps)}});
  }
  return {{"verdict", adjudication.is_sybil() ? "sybil" : "false_alarm"}, {"groups", std::move(groups)}};
}

}  // namespace sybil::p2dap
