#include "sybil/crypto.hpp"

// The one-shot EVP interface costs ~5x more per call than the low-level
// SHA1 API, and pool generation performs tens of millions of hashes.
#define OPENSSL_SUPPRESS_DEPRECATED
#include <openssl/sha.h>

#include <algorithm>
#include <cstring>

#include "sybil/error.hpp"

namespace sybil::crypto {

namespace {

void store_be32(std::uint8_t* out, std::uint32_t v) {
  out[0] = static_cast<std::uint8_t>(v >> 24);
  out[1] = static_cast<std::uint8_t>(v >> 16);
  out[2] = static_cast<std::uint8_t>(v >> 8);
  out[3] = static_cast<std::uint8_t>(v);
}

// Messages of at most 55 bytes fit a single padded block; hashing them with
// one compression call skips the Update/Final bookkeeping.
Digest sha1_single_block(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  std::uint8_t block[64] = {};
  std::memcpy(block, a.data(), a.size());
  if (!b.empty()) std::memcpy(block + a.size(), b.data(), b.size());
  const std::size_t len = a.size() + b.size();
  block[len] = 0x80;
  const std::uint64_t bits = static_cast<std::uint64_t>(len) * 8;
  for (int i = 0; i < 8; ++i) block[63 - i] = static_cast<std::uint8_t>(bits >> (8 * i));
  SHA_CTX ctx;
  SHA1_Init(&ctx);
  SHA1_Transform(&ctx, block);
  Digest out;
  store_be32(out.data() + 0, ctx.h0);
  store_be32(out.data() + 4, ctx.h1);
  store_be32(out.data() + 8, ctx.h2);
  store_be32(out.data() + 12, ctx.h3);
  store_be32(out.data() + 16, ctx.h4);
  return out;
}

}  // namespace

Digest keyed_hash(const HashKey& key, std::span<const std::uint8_t> data) {
  if (key.bytes.empty()) throw Error(Errc::invalid_key, "empty hash key");
  if (key.bytes.size() + data.size() <= 55) return sha1_single_block(key.bytes, data);
  SHA_CTX ctx;
  SHA1_Init(&ctx);
  SHA1_Update(&ctx, key.bytes.data(), key.bytes.size());
  if (!data.empty()) SHA1_Update(&ctx, data.data(), data.size());
  Digest out;
  SHA1_Final(out.data(), &ctx);
  return out;
}

std::uint32_t extract_bits(std::span<const std::uint8_t> digest, BitRange selector) {
  const std::size_t total_bits = digest.size() * 8;
  if (selector.width == 0 || selector.width > 32 ||
      static_cast<std::size_t>(selector.offset) + selector.width > total_bits) {
    throw Error(Errc::range, "bit selector [" + std::to_string(selector.offset) + ", " +
                                 std::to_string(selector.offset + selector.width) +
                                 ") outside a " + std::to_string(total_bits) + "-bit digest");
  }
  std::uint64_t acc = 0;
  unsigned filled = 0;
  // Walk bytes from the least significant end, starting at the byte that
  // holds bit `offset`.
  std::size_t byte = digest.size() - 1 - selector.offset / 8;
  unsigned shift = selector.offset % 8;
  while (filled < selector.width) {
    const unsigned take = std::min(8u - shift, selector.width - filled);
    const std::uint64_t bits = (digest[byte] >> shift) & ((1u << take) - 1u);
    acc |= bits << filled;
    filled += take;
    shift = 0;
    if (byte == 0) break;
    --byte;
  }
  return static_cast<std::uint32_t>(acc);
}

CoarseValue extract_coarse(std::span<const std::uint8_t> digest, BitRange selector) {
  return CoarseValue{extract_bits(digest, selector)};
}

FineValue extract_fine(std::span<const std::uint8_t> digest, BitRange selector) {
  return FineValue{extract_bits(digest, selector)};
}

Digest coarse_digest(const HashKey& k_c, const Pseudonym& p) { return keyed_hash(k_c, p.bytes); }

Digest fine_digest(const HashKey& k_f, const Digest& coarse_stage) {
  return keyed_hash(k_f, coarse_stage);
}

CoarseValue coarse_of(const HashKey& k_c, const Pseudonym& p, HashWidths widths) {
  return extract_coarse(coarse_digest(k_c, p), widths.coarse_selector());
}

FineValue fine_of(const HashKey& k_c, const HashKey& k_f, const Pseudonym& p, HashWidths widths) {
  return extract_fine(fine_digest(k_f, coarse_digest(k_c, p)), widths.fine_selector());
}

Signature sign(const SignatureKeyPair& keypair, std::span<const std::uint8_t> message) {
  Bytes framed;
  framed.reserve(keypair.signer_id.size() + 1 + message.size());
  append(framed, keypair.signer_id);
  framed.push_back(0);
  append(framed, message);
  const Digest d = keyed_hash(HashKey{KeyRole::Signing, keypair.secret}, framed);
  return Signature{Bytes(d.begin(), d.end())};
}

void KeyDirectory::register_signer(const SignatureKeyPair& keypair) {
  if (keypair.secret.empty()) throw Error(Errc::invalid_key, "empty signing secret");
  secrets_[keypair.signer_id] = keypair.secret;
}

bool KeyDirectory::verify(const std::string& signer_id, std::span<const std::uint8_t> message,
                          const Signature& signature) const {
  auto it = secrets_.find(signer_id);
  if (it == secrets_.end()) throw Error(Errc::unknown_signer, "signer '" + signer_id + "'");
  return sign(SignatureKeyPair{signer_id, it->second}, message) == signature;
}

}  // namespace sybil::crypto

namespace sybil::crypto {

std::string sha256_hex(std::string_view data) {
  unsigned char out[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), out);
  return to_hex(std::span<const std::uint8_t>(out, SHA256_DIGEST_LENGTH));
}

}  // namespace sybil::crypto
