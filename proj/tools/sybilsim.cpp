#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "sybil/error.hpp"
#include "sybil/p2dap.hpp"
#include "sybil/scenario.hpp"
#include "sybil/simulation.hpp"
#include "sybil/verify.hpp"

namespace fs = std::filesystem;
using namespace sybil;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;
constexpr int kDivergence = 4;

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io, "cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error(Errc::io, "write to '" + path.string() + "' failed");
}

sim::ScenarioConfig load_config(const std::string& path) {
  return path.empty() ? sim::ScenarioConfig{} : scenario::parse_config(path);
}

p2dap::PseudonymPool obtain_pool(const sim::ScenarioConfig& config, const std::string& pool_in,
                                 const std::string& pool_out, unsigned threads) {
  p2dap::PseudonymPool pool = pool_in.empty() ? p2dap::generate_yearly_pool(config.pool_year, config.pool_params(), threads)
                                              : verify::load_pool(pool_in);
  if (!pool_out.empty()) write_file(pool_out, p2dap::pool_to_json(pool, p2dap::PoolTier::Dmv).dump() + "\n");
  return pool;
}

struct SimulateArgs {
  std::string config, mode, trace, summary, pool, pool_out;
  std::optional<std::uint64_t> seed;
  std::uint64_t scenario_id = 0;
};

int simulate(const SimulateArgs& a) {
  auto config = load_config(a.config);
  if (a.seed) config.seed = *a.seed;
  if (!a.mode.empty()) config.mode = sim::mode_from_name(a.mode);
  config.validate();
  const auto pool = obtain_pool(config, a.pool, a.pool_out, 0);
  const auto result = sim::run_scenario(config, pool, a.scenario_id);
  if (!a.trace.empty()) write_file(a.trace, result.trace_text());
  const std::string summary = sim::metrics_to_json(result.metrics).dump(2) + "\n";
  if (!a.summary.empty()) write_file(a.summary, summary);
  else std::cout << summary;
  return kOk;
}

struct SweepArgs {
  std::string config, out, format, trace_dir, pool, pool_out;
  std::vector<double> speeds{20, 40, 60, 80};
  std::size_t scenarios = 10;
  std::uint64_t master_seed = 1;
  unsigned threads = 0;
};

int sweep(const SweepArgs& a) {
  auto config = load_config(a.config);
  scenario::ResultFormat format = scenario::ResultFormat::Csv;
  if (a.format == "json" || (a.format.empty() && fs::path(a.out).extension() == ".json")) {
    format = scenario::ResultFormat::Json;
  } else if (!a.format.empty() && a.format != "csv") {
    throw Error(Errc::invariant_violation, "unknown format '" + a.format + "'");
  }
  const auto pool = obtain_pool(config, a.pool, a.pool_out, a.threads);
  const auto seeds = scenario::derive_seeds(a.master_seed, a.scenarios);
  scenario::SweepOptions options;
  options.threads = a.threads;
  if (!a.trace_dir.empty()) {
    fs::create_directories(a.trace_dir);
    options.on_run = [dir = fs::path(a.trace_dir)](const scenario::RunKey& key, const sim::RunResult& r) {
      const std::string name = scenario::format_number(key.speed_kmh) + "_" + std::string(sim::mode_name(key.mode)) +
                               "_" + std::to_string(key.scenario_id) + ".jsonl";
      write_file(dir / name, r.trace_text());
    };
  }
  const auto result = scenario::run_sweep(config, a.speeds, a.scenarios, seeds, pool, options);
  if (a.out.empty()) {
    std::cout << scenario::results_to_csv(result);
  } else {
    scenario::emit_results(result, format, a.out);
  }
  return kOk;
}

struct GenPoolArgs {
  std::size_t vehicles = 100;
  std::size_t per_vehicle = 8;
  std::string out, tier = "dmv";
  int year = 2019;
  unsigned wc = 8, wf = 16, threads = 0;
};

int gen_pool(const GenPoolArgs& a) {
  p2dap::PoolParams params;
  params.n_vehicles = a.vehicles;
  params.per_vehicle = a.per_vehicle;
  params.widths = {a.wc, a.wf};
  const auto pool = p2dap::generate_yearly_pool(a.year, params, a.threads);
  if (a.tier != "dmv" && a.tier != "rsb") throw Error(Errc::invariant_violation, "unknown tier '" + a.tier + "'");
  const auto tier = a.tier == "rsb" ? p2dap::PoolTier::Rsb : p2dap::PoolTier::Dmv;
  const std::string text = p2dap::pool_to_json(pool, tier).dump() + "\n";
  if (a.out.empty()) std::cout << text;
  else write_file(a.out, text);
  return kOk;
}

int verify_trace(const std::string& trace, const std::string& pool) {
  const auto report = verify::verify_trace(trace, pool);
  std::cout << report.summary() << "\n";
  return report.verified ? kOk : kDivergence;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"VANET Sybil detection simulator"};
  app.require_subcommand(1);

  SimulateArgs sim_args;
  auto* sim_cmd = app.add_subcommand("simulate", "Run one seeded scenario");
  sim_cmd->add_option("--config", sim_args.config, "JSON config file (defaults when omitted)");
  sim_cmd->add_option("--seed", sim_args.seed, "Run seed (overrides config)");
  sim_cmd->add_option("--mode", sim_args.mode, "hybrid | footprint-only | p2dap-only");
  sim_cmd->add_option("--trace", sim_args.trace, "Write the JSONL event trace here");
  sim_cmd->add_option("--summary", sim_args.summary, "Write the run summary here (stdout otherwise)");
  sim_cmd->add_option("--scenario-id", sim_args.scenario_id, "Scenario index");
  sim_cmd->add_option("--pool", sim_args.pool, "Use this DMV pool file instead of generating one");
  sim_cmd->add_option("--pool-out", sim_args.pool_out, "Save the DMV pool used");

  SweepArgs sweep_args;
  auto* sweep_cmd = app.add_subcommand("sweep", "Speed sweep over seeded scenarios and all modes");
  sweep_cmd->add_option("--config", sweep_args.config, "Base JSON config");
  sweep_cmd->add_option("--speeds", sweep_args.speeds, "Speeds in km/h")->delimiter(',');
  sweep_cmd->add_option("--scenarios", sweep_args.scenarios, "Scenarios per speed and mode");
  sweep_cmd->add_option("--master-seed", sweep_args.master_seed, "Seed the scenario seeds derive from");
  sweep_cmd->add_option("--out", sweep_args.out, "Results file (stdout CSV otherwise)");
  sweep_cmd->add_option("--format", sweep_args.format, "csv | json (default from --out extension)");
  sweep_cmd->add_option("--threads", sweep_args.threads, "Worker threads (0: all cores)");
  sweep_cmd->add_option("--trace-dir", sweep_args.trace_dir, "Write every run's trace into this directory");
  sweep_cmd->add_option("--pool", sweep_args.pool, "Use this DMV pool file");
  sweep_cmd->add_option("--pool-out", sweep_args.pool_out, "Save the DMV pool used");

  GenPoolArgs pool_args;
  auto* pool_cmd = app.add_subcommand("gen-pool", "Generate a yearly pseudonym pool");
  pool_cmd->add_option("--vehicles", pool_args.vehicles, "Vehicles in the pool");
  pool_cmd->add_option("--per-vehicle", pool_args.per_vehicle, "Pseudonyms per vehicle");
  pool_cmd->add_option("--out", pool_args.out, "Output JSON (stdout otherwise)");
  pool_cmd->add_option("--year", pool_args.year, "Pool year (keys derive from it)");
  pool_cmd->add_option("--wc", pool_args.wc, "Coarse selector width in bits");
  pool_cmd->add_option("--wf", pool_args.wf, "Fine selector width in bits");
  pool_cmd->add_option("--tier", pool_args.tier, "dmv | rsb (rsb drops fine values)");
  pool_cmd->add_option("--threads", pool_args.threads, "Worker threads (0: all cores)");

  std::string trace_path, pool_path;
  auto* verify_cmd = app.add_subcommand("verify-trace", "Replay and re-simulate a trace");
  verify_cmd->add_option("--trace", trace_path, "JSONL trace")->required();
  verify_cmd->add_option("--pool", pool_path, "DMV pool file the run used")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*sim_cmd) return simulate(sim_args);
    if (*sweep_cmd) return sweep(sweep_args);
    if (*pool_cmd) return gen_pool(pool_args);
    if (*verify_cmd) return verify_trace(trace_path, pool_path);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.is_config_error() ? kConfigError : kRuntimeError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kOk;
}
