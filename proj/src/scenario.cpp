#include "sybil/scenario.hpp"

#include <atomic>
#include <charconv>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include "sybil/error.hpp"
#include "sybil/rng.hpp"

namespace sybil::scenario {

namespace fs = std::filesystem;

ScenarioConfig parse_config_text(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::malformed_json, e.what());
  }
  return sim::config_from_json(doc);
}

ScenarioConfig parse_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::missing_file, "cannot open config '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string emit_config(const ScenarioConfig& config) { return sim::config_to_json(config).dump(2) + "\n"; }

std::vector<std::uint64_t> derive_seeds(std::uint64_t master_seed, std::size_t count) {
  std::vector<std::uint64_t> seeds(count);
  for (std::size_t i = 0; i < count; ++i) seeds[i] = mix_seed(master_seed, "scenario-" + std::to_string(i));
  return seeds;
}

SweepResult run_sweep(const ScenarioConfig& base, std::span<const double> speeds, std::size_t scenarios,
                      std::span<const std::uint64_t> seeds, const p2dap::PseudonymPool& pool,
                      const SweepOptions& options) {
  if (speeds.empty()) throw Error(Errc::invariant_violation, "sweep needs at least one speed");
  if (seeds.size() != scenarios) {
    throw Error(Errc::invariant_violation, "sweep has " + std::to_string(scenarios) + " scenarios but " +
                                               std::to_string(seeds.size()) + " seeds");
  }
  if (options.modes.empty()) throw Error(Errc::invariant_violation, "sweep needs at least one mode");

  std::vector<RunKey> tasks;
  for (double speed : speeds) {
    for (Mode mode : options.modes) {
      for (std::size_t s = 0; s < scenarios; ++s) tasks.push_back({speed, mode, s, seeds[s]});
    }
  }
  std::vector<sim::Metrics> metrics(tasks.size());
  std::vector<std::exception_ptr> failures(tasks.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      const RunKey& key = tasks[i];
      try {
        ScenarioConfig config = base;
        config.scenario_speed_kmh = key.speed_kmh;
        config.mode = key.mode;
        config.seed = key.seed;
        auto result = sim::run_scenario(config, pool, key.scenario_id);
        metrics[i] = result.metrics;
        if (options.on_run) options.on_run(key, result);
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };
  unsigned threads = options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, tasks.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool_threads;
    for (unsigned t = 0; t < threads; ++t) pool_threads.emplace_back(worker);
  }

  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (!failures[i]) continue;
    const std::string where = "speed " + format_number(tasks[i].speed_kmh) + " km/h, seed " + std::to_string(tasks[i].seed);
    try {
      std::rethrow_exception(failures[i]);
    } catch (const Error& e) {
      throw Error(e.code(), where + ": " + e.what());
    } catch (const std::exception& e) {
      throw Error(Errc::consistency, where + ": " + e.what());
    }
  }

  SweepResult out;
  for (std::size_t i = 0; i < tasks.size(); i += scenarios) {
    SweepRow row{tasks[i].speed_kmh, tasks[i].mode, 0.0, {}};
    double sum = 0.0;
    for (std::size_t s = 0; s < scenarios; ++s) {
      const auto& m = metrics[i + s];
      row.runs.push_back({tasks[i + s].scenario_id, tasks[i + s].seed, m.attackers_detected, m.attackers_total, m.rate_pct});
      sum += m.rate_pct;
    }
    row.mean_rate_pct = scenarios ? sum / static_cast<double>(scenarios) : 0.0;
    out.rows.push_back(std::move(row));
  }
  return out;
}

std::string format_number(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  std::string s(buf, end);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

namespace {

double parse_double(std::string_view field, std::size_t line) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw Error(Errc::parse, "results line " + std::to_string(line) + ": bad number '" + std::string(field) + "'");
  }
  return v;
}

std::uint64_t parse_uint(std::string_view field, std::size_t line) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw Error(Errc::parse, "results line " + std::to_string(line) + ": bad integer '" + std::string(field) + "'");
  }
  return v;
}

constexpr std::string_view kHeader = "speed_kmh,mode,scenario_id,seed,detected,total,rate_pct";

}  // namespace

std::string results_to_csv(const SweepResult& result) {
  std::string out(kHeader);
  out += '\n';
  for (const auto& row : result.rows) {
    const std::string prefix = format_number(row.speed_kmh) + "," + std::string(sim::mode_name(row.mode)) + ",";
    double detected = 0.0;
    std::size_t total = 0;
    for (const auto& run : row.runs) {
      out += prefix + std::to_string(run.scenario_id) + "," + std::to_string(run.seed) + "," +
             std::to_string(run.detected) + "," + std::to_string(run.total) + "," + format_number(run.rate_pct) + "\n";
      detected += static_cast<double>(run.detected);
      total = run.total;
    }
    const double mean_detected = row.runs.empty() ? 0.0 : detected / static_cast<double>(row.runs.size());
    out += prefix + "mean,," + format_number(mean_detected) + "," + std::to_string(total) + "," +
           format_number(row.mean_rate_pct) + "\n";
  }
  return out;
}

nlohmann::json results_to_json(const SweepResult& result) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : result.rows) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& run : row.runs) {
      runs.push_back({{"scenario_id", run.scenario_id},
                      {"seed", run.seed},
                      {"detected", run.detected},
                      {"total", run.total},
                      {"rate_pct", run.rate_pct}});
    }
    rows.push_back({{"speed_kmh", row.speed_kmh},
                    {"mode", sim::mode_name(row.mode)},
                    {"mean_rate_pct", row.mean_rate_pct},
                    {"runs", std::move(runs)}});
  }
  return {{"rows", std::move(rows)}};
}

SweepResult results_from_csv(std::string_view text) {
  SweepResult out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool header_seen = false;
  SweepRow current;
  bool open = false;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != kHeader) throw Error(Errc::parse, "results line 1: unexpected header");
      header_seen = true;
      continue;
    }
    std::vector<std::string_view> f;
    std::size_t start = 0;
    while (true) {
      std::size_t comma = line.find(',', start);
      f.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (f.size() != 7) throw Error(Errc::parse, "results line " + std::to_string(line_no) + ": expected 7 fields");
    const double speed = parse_double(f[0], line_no);
    const Mode mode = sim::mode_from_name(f[1]);
    if (!open || current.speed_kmh != speed || current.mode != mode) {
      if (open) throw Error(Errc::parse, "results line " + std::to_string(line_no) + ": group without mean row");
      current = SweepRow{speed, mode, 0.0, {}};
      open = true;
    }
    if (f[2] == "mean") {
      current.mean_rate_pct = parse_double(f[6], line_no);
      out.rows.push_back(std::move(current));
      current = SweepRow{};
      open = false;
      continue;
    }
    current.runs.push_back({parse_uint(f[2], line_no), parse_uint(f[3], line_no), parse_uint(f[4], line_no),
                            parse_uint(f[5], line_no), parse_double(f[6], line_no)});
  }
  if (open) throw Error(Errc::parse, "results: trailing group without mean row");
  return out;
}

void emit_results(const SweepResult& result, ResultFormat format, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io, "cannot write '" + path.string() + "'");
  if (format == ResultFormat::Csv) {
    out << results_to_csv(result);
  } else {
    out << results_to_json(result).dump(2) << '\n';
  }
  if (!out) throw Error(Errc::io, "write to '" + path.string() + "' failed");
}

}  // namespace sybil::scenario
