#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sybil/crypto.hpp"
#include "sybil/rng.hpp"

namespace sybil::footprint {

using crypto::Signature;

inline constexpr std::size_t kDefaultNonceBytes = 8;
inline constexpr const char* kTrustAuthorityId = "ta";

/// RSU-issued waypoint. One tag per physical radio contact.
struct LinkTag {
  std::string rsu_id;
  double issue_time = 0.0;
  Bytes contact_nonce;
  Signature rsu_signature;
  std::optional<Signature> ta_countersignature;

  /// Bytes covered by the RSU signature: (rsu_id, issue_time, nonce).
  Bytes signed_payload() const;
  /// Bytes covered by the TA countersignature: payload plus RSU signature.
  Bytes authorized_payload() const;
  /// Canonical encoding of the whole tag, used for series comparison.
  Bytes encode() const;

  bool operator==(const LinkTag&) const = default;
};

struct Trajectory {
  std::string identity;
  std::vector<LinkTag> tags;
};

/// Neighbor graph of the deployment plus the TA-held signer registry.
class RsuDirectory {
 public:
  void add_rsu(const crypto::SignatureKeyPair& keypair);
  void add_trust_authority(const crypto::SignatureKeyPair& keypair);
  /// Symmetric link.
  void link(const std::string& a, const std::string& b);

  bool has_rsu(const std::string& id) const { return neighbors_.contains(id); }
  const std::set<std::string>& neighbors_of(const std::string& id) const;
  const std::map<std::string, std::set<std::string>>& adjacency() const { return neighbors_; }
  const crypto::KeyDirectory& signers() const { return signers_; }

 private:
  std::map<std::string, std::set<std::string>> neighbors_;
  crypto::KeyDirectory signers_;
};

/// A tag template an RSU announces to its neighbors at deployment.
struct TagAnnouncement {
  std::string from;
  LinkTag tag;
};

class Rsu {
 public:
  Rsu(crypto::SignatureKeyPair keypair, double position_m, std::size_t nonce_bytes = kDefaultNonceBytes);

  const std::string& id() const { return keypair_.signer_id; }
  double position_m() const { return position_m_; }

  /// One signed tag for one physical contact. The nonce comes from the
  /// caller's seeded stream.
  LinkTag issue_tag(double now, Rng& nonce_rng) const;

  /// Deployment step: sign a fresh template tag for announcement.
  void deploy(double now, Rng& nonce_rng);
  const std::optional<LinkTag>& announcement() const { return announcement_; }

  void receive(const TagAnnouncement& announcement) { received_[announcement.from] = announcement.tag; }
  const std::map<std::string, LinkTag>& received() const { return received_; }

 private:
  crypto::SignatureKeyPair keypair_;
  double position_m_;
  std::size_t nonce_bytes_;
  std::optional<LinkTag> announcement_;
  std::map<std::string, LinkTag> received_;
};

/// Attaches the TA countersignature. Throws Errc::unknown_signer for an
/// unregistered RSU and Errc::authorization_rejected when the RSU signature
/// does not verify.
LinkTag ta_authorize(const LinkTag& tag, const RsuDirectory& directory,
                     const crypto::SignatureKeyPair& ta_keypair);

/// Both signatures verify (the countersignature is required). Unknown
/// signers are reported as invalid rather than thrown.
bool verify_tag(const LinkTag& tag, const RsuDirectory& directory);

/// (neighbor id, announcement) for each neighbor of `rsu`. Empty when the
/// RSU has not deployed yet.
std::vector<std::pair<std::string, TagAnnouncement>> broadcast_tags(const Rsu& rsu,
                                                                    const RsuDirectory& directory);

/// Throws Errc::invalid_tag if the tag fails verification and
/// Errc::serial_order if its issue time does not exceed the last tag's.
void append_tag(Trajectory& trajectory, const LinkTag& tag, const RsuDirectory& directory);

/// Groups identities whose trailing `match_length` tags are byte-identical.
/// Identities with fewer tags are never grouped. Groups are sorted, and
/// listed in order of their smallest member.
std::vector<std::vector<std::string>> detect_duplicate_series(std::span<const Trajectory> claims,
                                                              std::size_t match_length);

nlohmann::json tag_to_json(const LinkTag& tag);
LinkTag tag_from_json(const nlohmann::json& j);

/// One JSON object per line per tag: {identity, rsu_id, issue_time, nonce,
/// sig, ta_sig}.
std::string export_trajectories_jsonl(std::span<const Trajectory> trajectories);
std::vector<Trajectory> import_trajectories_jsonl(const std::string& text);

}  // namespace sybil::footprint
