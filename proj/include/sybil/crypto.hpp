#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>

#include "sybil/bytes.hpp"

namespace sybil::crypto {

inline constexpr std::size_t kDigestSize = 20;
inline constexpr std::size_t kDefaultPseudonymSize = 16;
inline constexpr std::size_t kDefaultKeySize = 32;

using Digest = std::array<std::uint8_t, kDigestSize>;

/// Opaque per-vehicle identifier used to sign beacons. Byte equality is the
/// only identity relation.
struct Pseudonym {
  Bytes bytes;

  std::string hex() const { return to_hex(bytes); }
  auto operator<=>(const Pseudonym&) const = default;
};

enum class KeyRole { GlobalCoarse, DmvFine, Signing };

struct HashKey {
  KeyRole role = KeyRole::GlobalCoarse;
  Bytes bytes;
};

struct CoarseValue {
  std::uint32_t value = 0;
  auto operator<=>(const CoarseValue&) const = default;
};

struct FineValue {
  std::uint32_t value = 0;
  auto operator<=>(const FineValue&) const = default;
};

/// Bit window inside a digest. Bit 0 is the least significant bit of the
/// last digest byte (the digest is read as a big-endian integer).
struct BitRange {
  unsigned offset = 0;
  unsigned width = 0;
  auto operator<=>(const BitRange&) const = default;
};

struct HashWidths {
  unsigned coarse = 8;
  unsigned fine = 16;

  BitRange coarse_selector() const { return {0, coarse}; }
  // Fine bits sit directly above the coarse bits so the two never alias.
  BitRange fine_selector() const { return {coarse, fine}; }
  auto operator<=>(const HashWidths&) const = default;
};

/// SHA-1(key || data). Throws Errc::invalid_key for an empty key.
Digest keyed_hash(const HashKey& key, std::span<const std::uint8_t> data);

/// Throws Errc::range when the selector is empty, wider than 32 bits, or
/// falls outside the digest.
std::uint32_t extract_bits(std::span<const std::uint8_t> digest, BitRange selector);

CoarseValue extract_coarse(std::span<const std::uint8_t> digest, BitRange selector);
FineValue extract_fine(std::span<const std::uint8_t> digest, BitRange selector);

// Two-stage pipeline: coarse bits come from keyed_hash(k_c, p); fine bits
// from keyed_hash(k_f, keyed_hash(k_c, p)).
Digest coarse_digest(const HashKey& k_c, const Pseudonym& p);
Digest fine_digest(const HashKey& k_f, const Digest& coarse_stage);
CoarseValue coarse_of(const HashKey& k_c, const Pseudonym& p, HashWidths widths);
FineValue fine_of(const HashKey& k_c, const HashKey& k_f, const Pseudonym& p, HashWidths widths);

// --- signatures -----------------------------------------------------------
//
// MAC-style stand-in: a signature is keyed_hash(secret, signer_id || 0x00 ||
// message). Verification needs the signer's secret, which lives in a
// KeyDirectory owned by the trust authority.

struct Signature {
  Bytes bytes;
  auto operator<=>(const Signature&) const = default;
};

struct SignatureKeyPair {
  std::string signer_id;
  Bytes secret;
};

Signature sign(const SignatureKeyPair& keypair, std::span<const std::uint8_t> message);

class KeyDirectory {
 public:
  void register_signer(const SignatureKeyPair& keypair);
  bool contains(const std::string& signer_id) const { return secrets_.contains(signer_id); }

  /// Throws Errc::unknown_signer for an unregistered id.
  bool verify(const std::string& signer_id, std::span<const std::uint8_t> message,
              const Signature& signature) const;

  std::size_t size() const { return secrets_.size(); }

 private:
  std::map<std::string, Bytes> secrets_;
};

}  // namespace sybil::crypto

template <>
struct std::hash<sybil::crypto::Pseudonym> {
  std::size_t operator()(const sybil::crypto::Pseudonym& p) const noexcept {
    std::size_t h = 0xcbf29ce484222325ULL;
    for (auto b : p.bytes) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
    return h;
  }
};

namespace sybil::crypto {

/// Lower-case hex SHA-256, used for trace fingerprints.
std::string sha256_hex(std::string_view data);

}  // namespace sybil::crypto
