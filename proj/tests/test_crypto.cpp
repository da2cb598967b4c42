#include <cmath>
#include <cstring>

#include "doctest.h"
#include "sybil/crypto.hpp"
#include "sybil/error.hpp"
#include "sybil/p2dap.hpp"
#include "sybil/rng.hpp"

using namespace sybil;
using namespace sybil::crypto;

namespace {

HashKey key_of(std::uint8_t fill, KeyRole role = KeyRole::GlobalCoarse) {
  return HashKey{role, Bytes(32, fill)};
}

Digest digest_ending(std::initializer_list<std::uint8_t> tail) {
  Digest d{};
  std::size_t i = d.size() - tail.size();
  for (auto b : tail) d[i++] = b;
  return d;
}

// Reference: treat the digest as a big-endian 160-bit integer and shift.
std::uint32_t shift_mask(const Digest& d, unsigned offset, unsigned width) {
  std::uint32_t v = 0;
  for (unsigned bit = 0; bit < width; ++bit) {
    const unsigned pos = offset + bit;
    const std::uint8_t byte = d[d.size() - 1 - pos / 8];
    v |= static_cast<std::uint32_t>((byte >> (pos % 8)) & 1u) << bit;
  }
  return v;
}

}  // namespace

TEST_CASE("keyed_hash of 32 zero bytes matches an independent SHA-1") {
  // Pinned from Python's hashlib.sha1(bytes(32)).
  CHECK(to_hex(keyed_hash(key_of(0), {})) == "de8a847bff8c343d69b853a215e6ee775ef2ef96");
  const Bytes abc{'a', 'b', 'c'};
  CHECK(to_hex(keyed_hash(key_of(1), abc)) == "0b82c3aeed8476a93a693aeeb66be30272513c3f");
}

TEST_CASE("keyed_hash is deterministic and separates keys") {
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    const Bytes data = rng.bytes(16 + i % 50);
    CHECK(keyed_hash(key_of(3), data) == keyed_hash(key_of(3), data));
    CHECK(keyed_hash(key_of(3), data) != keyed_hash(key_of(4), data));
  }
}

TEST_CASE("keyed_hash single-block and multi-block paths agree with concatenation") {
  // 32-byte key + 23 bytes is the last single-block length; 24 spills over.
  Rng rng(11);
  for (std::size_t len : {0u, 1u, 22u, 23u, 24u, 31u, 100u}) {
    const Bytes data = rng.bytes(len);
    const HashKey k{KeyRole::GlobalCoarse, rng.bytes(32)};
    Bytes joined = k.bytes;
    joined.insert(joined.end(), data.begin(), data.end());
    const HashKey one_byte{KeyRole::GlobalCoarse, Bytes{joined[0]}};
    CHECK(keyed_hash(k, data) == keyed_hash(one_byte, std::span(joined).subspan(1)));
  }
}

TEST_CASE("keyed_hash rejects an empty key") {
  HashKey empty{KeyRole::GlobalCoarse, {}};
  try {
    keyed_hash(empty, Bytes{1});
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::invalid_key);
  }
}

TEST_CASE("extract_coarse on fixed digests") {
  CHECK(extract_coarse(digest_ending({0x2A}), {0, 8}).value == 42);
  CHECK(extract_coarse(Digest{}, {0, 8}).value == 0);
  CHECK(extract_fine(Digest{}, {8, 16}).value == 0);
  CHECK(extract_fine(digest_ending({0x01, 0x01, 0xff}), {8, 16}).value == 257);
}

TEST_CASE("extract_bits rejects selectors outside the digest") {
  for (BitRange bad : {BitRange{0, 0}, BitRange{0, 33}, BitRange{150, 16}, BitRange{160, 1}}) {
    try {
      extract_bits(Digest{}, bad);
      FAIL("no error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::range);
    }
  }
  CHECK_NOTHROW(extract_bits(Digest{}, BitRange{128, 32}));
}

TEST_CASE("extract_fine matches shift-and-mask reference") {
  Rng rng(2024);
  for (int i = 0; i < 256; ++i) {
    Digest d;
    const Bytes b = rng.bytes(d.size());
    std::memcpy(d.data(), b.data(), d.size());
    CHECK(extract_fine(d, {8, 16}).value == shift_mask(d, 8, 16));
    const unsigned offset = static_cast<unsigned>(rng.below(129));
    const unsigned width = 1 + static_cast<unsigned>(rng.below(32));
    CHECK(extract_bits(d, {offset, width}) == shift_mask(d, offset, width));
  }
}

TEST_CASE("coarse values of hashed pseudonyms are uniform") {
  const HashKey k = key_of(9);
  std::array<int, 256> counts{};
  const int n = 1000;
  for (int i = 0; i < n; ++i) {
    Bytes p(16, 0);
    for (int b = 0; b < 4; ++b) p[b] = static_cast<std::uint8_t>(i >> (8 * b));
    ++counts[extract_coarse(keyed_hash(k, p), {0, 8}).value];
  }
  const double expected = n / 256.0;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // 255 degrees of freedom; 330.5 is the 0.1% critical value.
  CHECK(chi2 < 330.5);
}

TEST_CASE("two-stage pipeline: fine comes from the coarse-stage digest") {
  const HashKey kc = key_of(1);
  const HashKey kf = key_of(2, KeyRole::DmvFine);
  const Pseudonym p{Bytes(16, 0x5a)};
  const HashWidths w{};
  const Digest stage1 = keyed_hash(kc, p.bytes);
  const Digest stage2 = keyed_hash(kf, stage1);
  CHECK(coarse_of(kc, p, w).value == shift_mask(stage1, 0, 8));
  CHECK(fine_of(kc, kf, p, w).value == shift_mask(stage2, 8, 16));
}

TEST_CASE("RSB-held state cannot be built from a DMV fine key") {
  try {
    p2dap::RsbObserver rsb("rsu-0", key_of(2, KeyRole::DmvFine), HashWidths{}, 5.0);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::invalid_key);
  }
}

TEST_CASE("signatures round trip and reject tampering") {
  KeyDirectory dir;
  const SignatureKeyPair a{"rsu-a", Bytes(32, 0xa1)};
  const SignatureKeyPair b{"rsu-b", Bytes(32, 0xb2)};
  dir.register_signer(a);
  dir.register_signer(b);
  Bytes msg{'t', 'a', 'g', 0, 1, 2};
  const Signature sig = sign(a, msg);
  CHECK(dir.verify("rsu-a", msg, sig));
  CHECK_FALSE(dir.verify("rsu-b", msg, sig));
  for (std::size_t bit = 0; bit < msg.size() * 8; ++bit) {
    Bytes flipped = msg;
    flipped[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    CHECK_FALSE(dir.verify("rsu-a", flipped, sig));
  }
  // A forger without the secret.
  CHECK_FALSE(dir.verify("rsu-a", msg, sign(SignatureKeyPair{"rsu-a", Bytes(32, 0)}, msg)));
  try {
    dir.verify("rsu-z", msg, sig);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::unknown_signer);
  }
}

TEST_CASE("sha256_hex known answer") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
