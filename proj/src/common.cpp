#include "sybil/bytes.hpp"
#include "sybil/error.hpp"
#include "sybil/rng.hpp"

namespace sybil {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_key: return "invalid-key";
    case Errc::range: return "range";
    case Errc::unknown_signer: return "unknown-signer";
    case Errc::authorization_rejected: return "authorization-rejected";
    case Errc::serial_order: return "serial-order-violation";
    case Errc::invalid_tag: return "invalid-tag";
    case Errc::generation_exhausted: return "generation-exhausted";
    case Errc::malformed_report: return "malformed-report";
    case Errc::missing_file: return "missing-file";
    case Errc::malformed_json: return "malformed-json";
    case Errc::unknown_key: return "unknown-key";
    case Errc::invariant_violation: return "invariant-violation";
    case Errc::consistency: return "internal-consistency";
    case Errc::io: return "io";
    case Errc::parse: return "parse";
  }
  return "unknown";
}

std::string to_hex(std::span<const std::uint8_t> data) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(data.size() * 2);
  for (auto b : data) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0x0f]);
  }
  return out;
}

namespace {
int nibble(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}
}  // namespace

Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw Error(Errc::parse, "odd-length hex string");
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const int hi = nibble(hex[2 * i]);
    const int lo = nibble(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw Error(Errc::parse, "invalid hex digit");
    out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return out;
}

std::uint64_t mix_seed(std::uint64_t a, std::string_view label) noexcept {
  // FNV-1a over the label, then mixed with the seed.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return mix_seed(a, h);
}

}  // namespace sybil
