#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sybil/p2dap.hpp"

namespace sybil::verify {

struct VerificationReport {
  bool verified = false;
  std::size_t lines = 0;
  std::size_t divergences = 0;                     // distinct lines flagged
  std::optional<std::size_t> first_divergence;     // 1-based line number
  std::string message;

  std::string summary() const;
};

/// Checks a JSONL trace three ways: structure (seq, time order, framing),
/// detector replay from the recorded inputs, and a full re-simulation from
/// the recorded config against the given DMV pool. Unparseable lines throw
/// Errc::parse naming the line.
VerificationReport verify_trace_lines(const std::vector<std::string>& lines, const p2dap::PseudonymPool& pool);

VerificationReport verify_trace(const std::filesystem::path& trace, const std::filesystem::path& pool_file);

std::vector<std::string> read_lines(const std::filesystem::path& path);
p2dap::PseudonymPool load_pool(const std::filesystem::path& path);

}  // namespace sybil::verify
