#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sybil/config.hpp"
#include "sybil/p2dap.hpp"
#include "sybil/pipeline.hpp"

namespace sybil::sim {

struct RunResult {
  std::vector<std::string> trace_lines;  // JSON objects, one per event
  Metrics metrics;

  std::string trace_text() const;
  std::string trace_sha256() const;
};

/// Throws Errc::invariant_violation if the pool was not generated for this
/// config (year, widths, size, pseudonyms per vehicle).
void check_pool_compatible(const ScenarioConfig& config, const p2dap::PseudonymPool& pool);

/// One seeded run from t = 0 to sim_time. The run seed is config.seed; RNG
/// streams derive from (config.seed, scenario_id). Identical inputs give a
/// byte-identical trace.
RunResult run_scenario(const ScenarioConfig& config, const p2dap::PseudonymPool& pool,
                       std::uint64_t scenario_id = 0);

/// Same, generating the yearly pool from the config first.
RunResult run_scenario(const ScenarioConfig& config, std::uint64_t scenario_id = 0);

}  // namespace sybil::sim
