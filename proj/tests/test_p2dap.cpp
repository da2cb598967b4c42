#include <map>
#include <set>

#include "doctest.h"
#include "sybil/crypto.hpp"
#include "sybil/error.hpp"
#include "sybil/p2dap.hpp"
#include "sybil/rng.hpp"

using namespace sybil;
using namespace sybil::p2dap;
using crypto::HashWidths;

namespace {

const DmvKeys& keys() {
  static const DmvKeys k = derive_dmv_keys(2019);
  return k;
}

PoolParams params(std::size_t n, std::size_t k, HashWidths w) {
  PoolParams p;
  p.n_vehicles = n;
  p.per_vehicle = k;
  p.widths = w;
  return p;
}

const PseudonymPool& small_pool() {
  static const PseudonymPool pool = generate_pool(keys().coarse, keys().fine, params(100, 8, {4, 8}), 99, 2019, 1);
  return pool;
}

// Independent check of every pool invariant by re-hashing from the keys.
void check_pool(const PseudonymPool& pool, const DmvKeys& k, std::size_t n, std::size_t per) {
  REQUIRE(pool.size() == n);
  std::set<std::pair<std::uint32_t, std::uint32_t>> pairs;
  std::set<crypto::Pseudonym> seen;
  for (const auto& v : pool.vehicles()) {
    REQUIRE(v.pseudonyms.size() == per);
    REQUIRE(v.fine.has_value());
    for (const auto& p : v.pseudonyms) {
      CHECK(seen.insert(p).second);
      CHECK(crypto::coarse_of(k.coarse, p, pool.widths()) == v.coarse);
      CHECK(crypto::fine_of(k.coarse, k.fine, p, pool.widths()) == *v.fine);
      CHECK(v.coarse.value < (1u << pool.widths().coarse));
      CHECK(v.fine->value < (1u << pool.widths().fine));
    }
    CHECK(pairs.emplace(v.coarse.value, v.fine->value).second);
  }
}

Beacon beacon(const crypto::Pseudonym& p, double t) { return Beacon{"id", p, t, 0.0, 40.0}; }

template <class F>
Errc error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::consistency;
}

}  // namespace

TEST_CASE("single vehicle, single pseudonym pool") {
  const auto pool = generate_pool(keys().coarse, keys().fine, params(1, 1, {8, 16}), 1, 2019, 1);
  check_pool(pool, keys(), 1, 1);
}

TEST_CASE("default-width pool passes the re-hash oracle") {
  const auto pool = generate_yearly_pool(2019, params(100, 8, {8, 16}));
  check_pool(pool, keys(), 100, 8);
  CHECK(pool.year() == 2019);
}

TEST_CASE("small-width pools pass the re-hash oracle across per_vehicle values") {
  for (std::size_t per : {1u, 2u, 5u, 8u, 12u}) {
    CAPTURE(per);
    const auto pool = generate_pool(keys().coarse, keys().fine, params(60, per, {4, 8}), per, 2019, 2);
    check_pool(pool, keys(), 60, per);
  }
}

TEST_CASE("pool generation is deterministic and independent of thread count") {
  const auto a = generate_pool(keys().coarse, keys().fine, params(100, 8, {4, 8}), 99, 2019, 1);
  const auto b = generate_pool(keys().coarse, keys().fine, params(100, 8, {4, 8}), 99, 2019, 3);
  CHECK(a == b);
  CHECK(a == small_pool());
  CHECK(pool_to_json(a, PoolTier::Dmv).dump() == pool_to_json(b, PoolTier::Dmv).dump());
  const auto c = generate_pool(keys().coarse, keys().fine, params(100, 8, {4, 8}), 100, 2019, 1);
  CHECK_FALSE(a == c);
}

TEST_CASE("pool generation errors") {
  const auto& kc = keys().coarse;
  const auto& kf = keys().fine;
  CHECK(error_of([&] { generate_pool(kc, kf, params(0, 8, {4, 8}), 1); }) == Errc::invariant_violation);
  CHECK(error_of([&] { generate_pool(kc, kf, params(1, 0, {4, 8}), 1); }) == Errc::invariant_violation);
  CHECK(error_of([&] { generate_pool(kc, kf, params(5, 1, {1, 1}), 1); }) == Errc::invariant_violation);
  CHECK(error_of([&] { generate_pool(kf, kf, params(1, 1, {4, 8}), 1); }) == Errc::invalid_key);
  auto starved = params(50, 8, {4, 8});
  starved.draw_budget = 500;
  CHECK(error_of([&] { generate_pool(kc, kf, starved, 1); }) == Errc::generation_exhausted);
}

TEST_CASE("default draw budget covers the bucket space") {
  CHECK(default_draw_budget(params(2, 2, {2, 2})) == 4000);
  CHECK(default_draw_budget(params(100, 8, {8, 16})) == (std::uint64_t{4} << 24));
}

TEST_CASE("pool JSON round trip and RSB tier") {
  const auto& pool = small_pool();
  const auto doc = pool_to_json(pool, PoolTier::Dmv);
  CHECK(pool_from_json(doc) == pool);
  CHECK(pool_from_json(nlohmann::json::parse(doc.dump())) == pool);

  const auto rsb = pool_to_json(pool, PoolTier::Rsb);
  for (const auto& v : rsb.at("vehicles")) CHECK_FALSE(v.contains("fine"));
  const auto view = pool_from_json(rsb);
  CHECK_FALSE(view.has_fine_view());
  CHECK(view == pool.rsb_view());
  CHECK(error_of([&] { pool_to_json(view, PoolTier::Dmv); }) == Errc::consistency);
}

TEST_CASE("duplicate pseudonym across vehicles is rejected") {
  auto vehicles = small_pool().vehicles();
  vehicles[1].pseudonyms[0] = vehicles[0].pseudonyms[0];
  CHECK(error_of([&] { PseudonymPool(2019, {4, 8}, vehicles); }) == Errc::consistency);
}

TEST_CASE("RSB: repeated pseudonym is not suspicious") {
  RsbObserver rsb("rsu-0", keys().coarse, {4, 8}, 5.0);
  const auto& p = small_pool().vehicles()[0].pseudonyms[0];
  CHECK_FALSE(rsb.observe(beacon(p, 1.0)));
  CHECK_FALSE(rsb.observe(beacon(p, 2.0)));
}

TEST_CASE("RSB: two same-coarse pseudonyms within tau are reported once per window") {
  RsbObserver rsb("rsu-0", keys().coarse, {4, 8}, 5.0);
  const auto& v = small_pool().vehicles()[0];
  CHECK_FALSE(rsb.observe(beacon(v.pseudonyms[0], 1.0)));
  auto r = rsb.observe(beacon(v.pseudonyms[1], 3.0));
  REQUIRE(r);
  CHECK(r->rsb_id == "rsu-0");
  CHECK(r->coarse == v.coarse);
  CHECK(r->pseudonyms == std::vector{v.pseudonyms[1], v.pseudonyms[0]});
  CHECK(r->window_start == 1.0);
  CHECK(r->window_end == 3.0);
  // Same pair again inside [0, 5): deduplicated.
  CHECK_FALSE(rsb.observe(beacon(v.pseudonyms[0], 4.0)));
  // Next window: reported again.
  CHECK(rsb.observe(beacon(v.pseudonyms[1], 6.0)));
}

TEST_CASE("RSB: pair further apart than tau is not reported") {
  RsbObserver rsb("rsu-0", keys().coarse, {4, 8}, 5.0);
  const auto& v = small_pool().vehicles()[0];
  CHECK_FALSE(rsb.observe(beacon(v.pseudonyms[0], 1.0)));
  CHECK_FALSE(rsb.observe(beacon(v.pseudonyms[1], 6.5)));
  // Exactly tau apart still counts.
  CHECK(rsb.observe(beacon(v.pseudonyms[2], 11.5)));
}

TEST_CASE("RSB reports equal the pairwise brute-force scan on a random stream") {
  const auto& pool = small_pool();
  std::vector<crypto::Pseudonym> all;
  for (const auto& v : pool.vehicles()) all.insert(all.end(), v.pseudonyms.begin(), v.pseudonyms.end());
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    std::vector<Beacon> stream;
    double t = 0.0;
    for (int i = 0; i < 2000; ++i) {
      t += rng.uniform() * 0.4;
      t = std::floor(t * 1000.0) / 1000.0;
      stream.push_back(beacon(all[rng.below(all.size())], t));
    }
    const double tau = 5.0;
    RsbObserver rsb("rsu-x", keys().coarse, {4, 8}, tau);
    std::set<std::tuple<std::size_t, crypto::Pseudonym, crypto::Pseudonym>> got;
    for (std::size_t j = 0; j < stream.size(); ++j) {
      if (auto r = rsb.observe(stream[j])) {
        CHECK(r->pseudonyms.size() >= 2);
        for (std::size_t q = 1; q < r->pseudonyms.size(); ++q) {
          auto [lo, hi] = std::minmax(r->pseudonyms[0], r->pseudonyms[q]);
          got.emplace(j, lo, hi);
          CHECK(crypto::coarse_of(keys().coarse, r->pseudonyms[q], {4, 8}) == r->coarse);
        }
      }
    }
    // Brute force: first beacon j completing each (window, unordered pair).
    std::set<std::tuple<std::int64_t, crypto::Pseudonym, crypto::Pseudonym>> claimed;
    std::set<std::tuple<std::size_t, crypto::Pseudonym, crypto::Pseudonym>> want;
    for (std::size_t j = 0; j < stream.size(); ++j) {
      const auto cj = crypto::coarse_of(keys().coarse, stream[j].pseudonym, {4, 8});
      const auto window = static_cast<std::int64_t>(std::floor(stream[j].timestamp / tau));
      for (std::size_t i = 0; i < j; ++i) {
        if (stream[i].pseudonym == stream[j].pseudonym) continue;
        if (stream[j].timestamp - stream[i].timestamp > tau) continue;
        if (crypto::coarse_of(keys().coarse, stream[i].pseudonym, {4, 8}) != cj) continue;
        auto [lo, hi] = std::minmax(stream[i].pseudonym, stream[j].pseudonym);
        if (claimed.emplace(window, lo, hi).second) want.emplace(j, lo, hi);
      }
    }
    CHECK(!want.empty());
    CHECK(got == want);
  }
}

TEST_CASE("adjudication: same vehicle is Sybil, coarse collision is a false alarm") {
  const auto& pool = small_pool();
  const auto& v0 = pool.vehicles()[0];
  SuspiciousReport same{"rsu-0", 0, 1, v0.coarse, {v0.pseudonyms[0], v0.pseudonyms[3]}};
  const auto a = dmv_adjudicate(same, pool, keys());
  CHECK(a.is_sybil());
  REQUIRE(a.groups.size() == 1);
  CHECK(a.groups[0].fine == *v0.fine);

  const PoolVehicle* other = nullptr;
  for (const auto& v : pool.vehicles()) {
    if (&v != &v0 && v.coarse == v0.coarse) other = &v;
  }
  REQUIRE(other != nullptr);
  SuspiciousReport cross{"rsu-0", 0, 1, v0.coarse, {v0.pseudonyms[0], other->pseudonyms[0]}};
  CHECK_FALSE(dmv_adjudicate(cross, pool, keys()).is_sybil());
  CHECK(adjudication_to_json(dmv_adjudicate(cross, pool, keys())).at("verdict") == "false_alarm");
}

TEST_CASE("adjudication errors") {
  const auto& pool = small_pool();
  const auto& v0 = pool.vehicles()[0];
  SuspiciousReport one{"rsu-0", 0, 1, v0.coarse, {v0.pseudonyms[0]}};
  CHECK(error_of([&] { dmv_adjudicate(one, pool, keys()); }) == Errc::malformed_report);
  SuspiciousReport narrow{"rsu-0", 0, 1, v0.coarse, {v0.pseudonyms[0], crypto::Pseudonym{Bytes(4, 1)}}};
  CHECK(error_of([&] { dmv_adjudicate(narrow, pool, keys()); }) == Errc::malformed_report);
  SuspiciousReport wrong{"rsu-0", 0, 1, crypto::CoarseValue{(v0.coarse.value + 1) % 16},
                         {v0.pseudonyms[0], v0.pseudonyms[1]}};
  CHECK(error_of([&] { dmv_adjudicate(wrong, pool, keys()); }) == Errc::malformed_report);
}

TEST_CASE("adjudication matches ownership over every candidate pair") {
  const auto& pool = small_pool();
  std::size_t checked = 0;
  for (std::size_t a = 0; a < pool.size(); ++a) {
    for (std::size_t b = a; b < pool.size(); ++b) {
      const auto& va = pool.vehicles()[a];
      const auto& vb = pool.vehicles()[b];
      if (va.coarse != vb.coarse) continue;
      for (std::size_t i = 0; i < va.pseudonyms.size(); ++i) {
        for (std::size_t j = (a == b ? i + 1 : 0); j < vb.pseudonyms.size(); ++j) {
          SuspiciousReport r{"rsu-0", 0, 1, va.coarse, {va.pseudonyms[i], vb.pseudonyms[j]}};
          const bool sybil = dmv_adjudicate(r, pool, keys()).is_sybil();
          CHECK(sybil == (pool.owner_of(va.pseudonyms[i]) == pool.owner_of(vb.pseudonyms[j])));
          ++checked;
        }
      }
    }
  }
  CHECK(checked > 2800);
}

TEST_CASE("report JSON round trip") {
  const auto& v0 = small_pool().vehicles()[0];
  SuspiciousReport r{"rsu-2", 1.5, 3.25, v0.coarse, {v0.pseudonyms[2], v0.pseudonyms[0], v0.pseudonyms[1]}};
  CHECK(report_from_json(report_to_json(r)) == r);
}
