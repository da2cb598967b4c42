#include "sybil/verify.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "sybil/crypto.hpp"
#include "sybil/error.hpp"
#include "sybil/pipeline.hpp"
#include "sybil/rng.hpp"
#include "sybil/simulation.hpp"

namespace sybil::verify {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string clip(const std::string& s, std::size_t n = 160) {
  return s.size() <= n ? s : s.substr(0, n) + "...";
}

json without_seq(json j) {
  if (j.is_object()) j.erase("seq");
  return j;
}

// Line number -> reason; keeps the first reason recorded for a line.
class Findings {
 public:
  void add(std::size_t line, std::string reason) { found_.try_emplace(line, std::move(reason)); }
  bool empty() const { return found_.empty(); }

  VerificationReport report(std::size_t lines) const {
    VerificationReport r;
    r.lines = lines;
    r.divergences = found_.size();
    r.verified = found_.empty();
    if (!found_.empty()) {
      r.first_divergence = found_.begin()->first;
      r.message = found_.begin()->second;
    }
    return r;
  }

 private:
  std::map<std::size_t, std::string> found_;
};

void compare(const std::vector<json>& expected, const std::vector<json>& actual, bool strip_seq,
             const char* check, Findings& findings) {
  const std::size_t n = std::max(expected.size(), actual.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (i >= actual.size()) {
      findings.add(actual.size() + 1, std::string(check) + ": trace ends early, expected " + clip(expected[i].dump()));
      return;
    }
    if (i >= expected.size()) {
      findings.add(i + 1, std::string(check) + ": unexpected extra event " + clip(actual[i].dump()));
      continue;
    }
    const json e = strip_seq ? without_seq(expected[i]) : expected[i];
    const json a = strip_seq ? without_seq(actual[i]) : actual[i];
    if (e != a) findings.add(i + 1, std::string(check) + ": expected " + clip(e.dump()) + ", found " + clip(a.dump()));
  }
}

bool check_pool_hashes(const p2dap::PseudonymPool& pool, std::string& why) {
  if (!pool.has_fine_view()) {
    why = "pool file lacks fine values; a DMV-tier pool is required";
    return false;
  }
  const auto keys = p2dap::derive_dmv_keys(pool.year());
  for (const auto& v : pool.vehicles()) {
    for (const auto& p : v.pseudonyms) {
      if (crypto::coarse_of(keys.coarse, p, pool.widths()) != v.coarse ||
          crypto::fine_of(keys.coarse, keys.fine, p, pool.widths()) != *v.fine) {
        why = "pool pseudonym " + p.hex() + " of " + v.vehicle_id + " does not hash to its recorded group";
        return false;
      }
    }
  }
  return true;
}

}  // namespace

std::string VerificationReport::summary() const {
  std::ostringstream out;
  if (verified) {
    out << "verified, 0 divergences (" << lines << " lines)";
  } else if (first_divergence) {
    out << "diverged at line " << *first_divergence << " (" << divergences << " divergent lines of " << lines
        << "): " << message;
  } else {
    out << "rejected: " << message;
  }
  return out.str();
}

VerificationReport verify_trace_lines(const std::vector<std::string>& lines, const p2dap::PseudonymPool& pool) {
  std::vector<json> events;
  events.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      events.push_back(json::parse(lines[i]));
    } catch (const json::parse_error& e) {
      throw Error(Errc::parse, "trace line " + std::to_string(i + 1) + ": " + e.what());
    }
    if (!events.back().is_object()) throw Error(Errc::parse, "trace line " + std::to_string(i + 1) + ": not an object");
  }

  Findings findings;
  if (events.empty()) {
    VerificationReport r;
    r.message = "empty trace";
    return r;
  }

  // Structure.
  double last_t = 0.0;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const json& e = events[i];
    const std::size_t line = i + 1;
    if (!e.contains("seq") || !e["seq"].is_number_unsigned() || e["seq"].get<std::uint64_t>() != i) {
      findings.add(line, "sequence number is not " + std::to_string(i));
    }
    if (!e.contains("type") || !e["type"].is_string()) {
      findings.add(line, "missing event type");
      continue;
    }
    if (!e.contains("t") || !e["t"].is_number()) {
      findings.add(line, "missing event time");
      continue;
    }
    const double t = e["t"].get<double>();
    if (t < last_t) findings.add(line, "time goes backwards");
    last_t = std::max(last_t, t);
  }
  if (events.front().value("type", "") != "run_start") {
    findings.add(1, "trace does not start with run_start");
    return findings.report(lines.size());
  }
  if (events.back().value("type", "") != "run_summary") {
    findings.add(lines.size(), "trace does not end with run_summary");
  }

  sim::ScenarioConfig config;
  std::uint64_t scenario_id = 0;
  try {
    const json& start = events.front();
    if (start.at("config_digest") != sim::config_digest(start.at("config"), start.at("scenario_id").get<std::uint64_t>())) {
      throw Error(Errc::consistency, "config does not match its digest");
    }
    config = sim::config_from_json(events.front().at("config"));
    scenario_id = events.front().at("scenario_id").get<std::uint64_t>();
    sim::check_pool_compatible(config, pool);
  } catch (const std::exception& e) {
    findings.add(1, std::string("run_start: ") + e.what());
    return findings.report(lines.size());
  }
  std::string why;
  if (!check_pool_hashes(pool, why)) {
    VerificationReport r = findings.report(lines.size());
    r.verified = false;
    if (!r.first_divergence) r.message = why;
    return r;
  }

  // Detector replay from the recorded inputs.
  {
    const std::uint64_t stream = sim::run_stream_seed(config.seed, scenario_id);
    Rng nonces(mix_seed(stream, "nonces"));
    const auto deployment = sim::deploy_infrastructure(config.road, stream, nonces);
    std::vector<json> replayed;
    sim::DetectionPipeline pipeline(config, pool, scenario_id, deployment.directory,
                                    [&](const json& e) { replayed.push_back(e); });
    pipeline.start();
    bool aborted = false;
    for (std::size_t i = 1; i < events.size() && !aborted; ++i) {
      const std::string type = events[i].value("type", "");
      if (!sim::DetectionPipeline::is_input(type) || type == "run_start") continue;
      try {
        pipeline.process(without_seq(events[i]));
      } catch (const std::exception& e) {
        findings.add(i + 1, std::string("replay: input rejected: ") + e.what());
        aborted = true;
      }
    }
    if (!aborted) {
      pipeline.finish();
      compare(replayed, events, true, "replay", findings);
    }
  }

  // Full re-simulation.
  {
    std::vector<json> expected;
    try {
      const auto rerun = sim::run_scenario(config, pool, scenario_id);
      expected.reserve(rerun.trace_lines.size());
      for (const auto& l : rerun.trace_lines) expected.push_back(json::parse(l));
      compare(expected, events, false, "re-simulation", findings);
    } catch (const Error& e) {
      findings.add(1, std::string("re-simulation failed: ") + e.what());
    }
  }

  return findings.report(lines.size());
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::missing_file, "cannot open '" + path.string() + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

p2dap::PseudonymPool load_pool(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::missing_file, "cannot open pool '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(Errc::malformed_json, "pool '" + path.string() + "': " + e.what());
  }
  return p2dap::pool_from_json(doc);
}

VerificationReport verify_trace(const fs::path& trace, const fs::path& pool_file) {
  const auto pool = load_pool(pool_file);
  return verify_trace_lines(read_lines(trace), pool);
}

}  // namespace sybil::verify
