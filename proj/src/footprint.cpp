#include "sybil/footprint.hpp"

#include <algorithm>
#include <bit>
#include <sstream>
#include <unordered_map>

#include "sybil/error.hpp"

namespace sybil::footprint {

namespace {

void append_u64(Bytes& out, std::uint64_t v) {
  for (int i = 7; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void append_field(Bytes& out, std::span<const std::uint8_t> data) {
  append_u64(out, data.size());
  append(out, data);
}

void append_field(Bytes& out, std::string_view text) {
  append_u64(out, text.size());
  append(out, text);
}

}  // namespace

Bytes LinkTag::signed_payload() const {
  Bytes out;
  append_field(out, rsu_id);
  append_u64(out, std::bit_cast<std::uint64_t>(issue_time));
  append_field(out, contact_nonce);
  return out;
}

Bytes LinkTag::authorized_payload() const {
  Bytes out = signed_payload();
  append_field(out, rsu_signature.bytes);
  return out;
}

Bytes LinkTag::encode() const {
  Bytes out = authorized_payload();
  out.push_back(ta_countersignature ? 1 : 0);
  if (ta_countersignature) append_field(out, ta_countersignature->bytes);
  return out;
}

void RsuDirectory::add_rsu(const crypto::SignatureKeyPair& keypair) {
  signers_.register_signer(keypair);
  neighbors_.try_emplace(keypair.signer_id);
}

void RsuDirectory::add_trust_authority(const crypto::SignatureKeyPair& keypair) {
  signers_.register_signer(keypair);
}

void RsuDirectory::link(const std::string& a, const std::string& b) {
  if (!has_rsu(a) || !has_rsu(b)) throw Error(Errc::unknown_signer, "link between unregistered RSUs");
  if (a == b) return;
  neighbors_[a].insert(b);
  neighbors_[b].insert(a);
}

const std::set<std::string>& RsuDirectory::neighbors_of(const std::string& id) const {
  auto it = neighbors_.find(id);
  if (it == neighbors_.end()) throw Error(Errc::unknown_signer, "RSU '" + id + "'");
  return it->second;
}

Rsu::Rsu(crypto::SignatureKeyPair keypair, double position_m, std::size_t nonce_bytes)
    : keypair_(std::move(keypair)), position_m_(position_m), nonce_bytes_(nonce_bytes) {}

LinkTag Rsu::issue_tag(double now, Rng& nonce_rng) const {
  LinkTag tag;
  tag.rsu_id = keypair_.signer_id;
  tag.issue_time = now;
  tag.contact_nonce = nonce_rng.bytes(nonce_bytes_);
  tag.rsu_signature = crypto::sign(keypair_, tag.signed_payload());
  return tag;
}

void Rsu::deploy(double now, Rng& nonce_rng) { announcement_ = issue_tag(now, nonce_rng); }

LinkTag ta_authorize(const LinkTag& tag, const RsuDirectory& directory,
                     const crypto::SignatureKeyPair& ta_keypair) {
  if (!directory.has_rsu(tag.rsu_id)) throw Error(Errc::unknown_signer, "RSU '" + tag.rsu_id + "'");
  if (!directory.signers().verify(tag.rsu_id, tag.signed_payload(), tag.rsu_signature)) {
    throw Error(Errc::authorization_rejected, "RSU signature on tag from '" + tag.rsu_id + "' does not verify");
  }
  LinkTag out = tag;
  out.ta_countersignature = crypto::sign(ta_keypair, out.authorized_payload());
  return out;
}

bool verify_tag(const LinkTag& tag, const RsuDirectory& directory) {
  if (!tag.ta_countersignature) return false;
  if (!directory.has_rsu(tag.rsu_id) || !directory.signers().contains(kTrustAuthorityId)) return false;
  return directory.signers().verify(tag.rsu_id, tag.signed_payload(), tag.rsu_signature) &&
         directory.signers().verify(kTrustAuthorityId, tag.authorized_payload(), *tag.ta_countersignature);
}

std::vector<std::pair<std::string, TagAnnouncement>> broadcast_tags(const Rsu& rsu,
                                                                    const RsuDirectory& directory) {
  std::vector<std::pair<std::string, TagAnnouncement>> out;
  if (!rsu.announcement()) return out;
  for (const auto& neighbor : directory.neighbors_of(rsu.id())) {
    out.emplace_back(neighbor, TagAnnouncement{rsu.id(), *rsu.announcement()});
  }
  return out;
}

void append_tag(Trajectory& trajectory, const LinkTag& tag, const RsuDirectory& directory) {
  if (!verify_tag(tag, directory)) {
    throw Error(Errc::invalid_tag, "tag from '" + tag.rsu_id + "' fails verification");
  }
  if (!trajectory.tags.empty() && !(tag.issue_time > trajectory.tags.back().issue_time)) {
    throw Error(Errc::serial_order, "tag at t=" + std::to_string(tag.issue_time) +
                                        " does not follow t=" + std::to_string(trajectory.tags.back().issue_time));
  }
  trajectory.tags.push_back(tag);
}

std::vector<std::vector<std::string>> detect_duplicate_series(std::span<const Trajectory> claims,
                                                              std::size_t match_length) {
  if (match_length == 0) throw Error(Errc::invariant_violation, "match length must be >= 1");
  // Byte equality of the trailing series is an equivalence relation, so
  // bucketing by the encoded suffix yields the transitive closure directly.
  std::map<Bytes, std::set<std::string>> by_suffix;
  for (const auto& claim : claims) {
    if (claim.tags.size() < match_length) continue;
    Bytes key;
    for (std::size_t i = claim.tags.size() - match_length; i < claim.tags.size(); ++i) {
      append_field(key, claim.tags[i].encode());
    }
    by_suffix[std::move(key)].insert(claim.identity);
  }
  std::vector<std::vector<std::string>> groups;
  for (auto& [_, members] : by_suffix) {
    if (members.size() >= 2) groups.emplace_back(members.begin(), members.end());
  }
  std::sort(groups.begin(), groups.end());
  return groups;
}

nlohmann::json tag_to_json(const LinkTag& tag) {
  return {{"rsu_id", tag.rsu_id},
          {"issue_time", tag.issue_time},
          {"nonce", to_hex(tag.contact_nonce)},
          {"sig", to_hex(tag.rsu_signature.bytes)},
          {"ta_sig", tag.ta_countersignature ? nlohmann::json(to_hex(tag.ta_countersignature->bytes))
                                             : nlohmann::json(nullptr)}};
}

LinkTag tag_from_json(const nlohmann::json& j) {
  LinkTag tag;
  tag.rsu_id = j.at("rsu_id").get<std::string>();
  tag.issue_time = j.at("issue_time").get<double>();
  tag.contact_nonce = from_hex(j.at("nonce").get<std::string>());
  tag.rsu_signature = Signature{from_hex(j.at("sig").get<std::string>())};
  if (j.contains("ta_sig") && !j.at("ta_sig").is_null()) {
    tag.ta_countersignature = Signature{from_hex(j.at("ta_sig").get<std::string>())};
  }
  return tag;
}

std::string export_trajectories_jsonl(std::span<const Trajectory> trajectories) {
  std::string out;
  for (const auto& t : trajectories) {
    for (const auto& tag : t.tags) {
      auto j = tag_to_json(tag);
      j["identity"] = t.identity;
      out += j.dump();
      out += '\n';
    }
  }
  return out;
}

std::vector<Trajectory> import_trajectories_jsonl(const std::string& text) {
  std::vector<Trajectory> out;
  std::unordered_map<std::string, std::size_t> index;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto identity = j.at("identity").get<std::string>();
      auto [it, inserted] = index.try_emplace(identity, out.size());
      if (inserted) out.push_back(Trajectory{identity, {}});
      out[it->second].tags.push_back(tag_from_json(j));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::parse, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace sybil::footprint
