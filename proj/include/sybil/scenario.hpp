#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "sybil/config.hpp"
#include "sybil/p2dap.hpp"
#include "sybil/simulation.hpp"

namespace sybil::scenario {

using sim::Mode;
using sim::ScenarioConfig;

/// Strict JSON config loader. Errors: Errc::missing_file,
/// Errc::malformed_json, Errc::unknown_key, Errc::invariant_violation.
ScenarioConfig parse_config(const std::filesystem::path& path);
ScenarioConfig parse_config_text(std::string_view text);
std::string emit_config(const ScenarioConfig& config);

/// The i-th scenario seed of a batch.
std::vector<std::uint64_t> derive_seeds(std::uint64_t master_seed, std::size_t count);

struct ScenarioRun {
  std::uint64_t scenario_id = 0;
  std::uint64_t seed = 0;
  std::size_t detected = 0;
  std::size_t total = 0;
  double rate_pct = 0.0;

  bool operator==(const ScenarioRun&) const = default;
};

struct SweepRow {
  double speed_kmh = 0.0;
  Mode mode = Mode::Hybrid;
  double mean_rate_pct = 0.0;
  std::vector<ScenarioRun> runs;

  bool operator==(const SweepRow&) const = default;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  bool operator==(const SweepResult&) const = default;
};

struct RunKey {
  double speed_kmh;
  Mode mode;
  std::uint64_t scenario_id;
  std::uint64_t seed;
};

struct SweepOptions {
  unsigned threads = 0;  // 0: hardware concurrency
  std::vector<Mode> modes{Mode::Hybrid, Mode::FootprintOnly, Mode::P2dapOnly};
  // Called from worker threads as runs finish; must be thread-safe.
  std::function<void(const RunKey&, const sim::RunResult&)> on_run;
};

/// Runs every (speed, mode, scenario) combination and averages per
/// (speed, mode). Scenario i uses seeds[i] in every mode and at every speed,
/// so modes compare identical arrival plans. Output does not depend on the
/// thread count. Run failures are rethrown with their (speed, seed).
SweepResult run_sweep(const ScenarioConfig& base, std::span<const double> speeds, std::size_t scenarios,
                      std::span<const std::uint64_t> seeds, const p2dap::PseudonymPool& pool,
                      const SweepOptions& options = {});

enum class ResultFormat { Csv, Json };

std::string results_to_csv(const SweepResult& result);
nlohmann::json results_to_json(const SweepResult& result);
SweepResult results_from_csv(std::string_view text);
void emit_results(const SweepResult& result, ResultFormat format, const std::filesystem::path& path);

/// Shortest round-trip decimal that always carries a fraction ("20.0").
std::string format_number(double value);

}  // namespace sybil::scenario
