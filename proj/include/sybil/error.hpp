#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sybil {

enum class Errc {
  invalid_key,
  range,
  unknown_signer,
  authorization_rejected,
  serial_order,
  invalid_tag,
  generation_exhausted,
  malformed_report,
  missing_file,
  malformed_json,
  unknown_key,
  invariant_violation,
  consistency,
  io,
  parse,
};

std::string_view errc_name(Errc code) noexcept;

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

  // Config-class errors map to the CLI's exit code 2.
  bool is_config_error() const noexcept {
    return code_ == Errc::missing_file || code_ == Errc::malformed_json ||
           code_ == Errc::unknown_key || code_ == Errc::invariant_violation;
  }

 private:
  Errc code_;
};

}  // namespace sybil
