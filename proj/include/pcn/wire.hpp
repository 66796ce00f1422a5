#pragma once

#include "pcn/identity.hpp"
#include "pcn/naming.hpp"
#include "pcn/version_vector.hpp"

#include <optional>
#include <variant>

namespace pcn {
namespace wire {

// 1-byte type tags (see docs/wire-format.md for the full byte layouts).
inline constexpr std::uint8_t kTagInterest = 0x01;
inline constexpr std::uint8_t kTagData = 0x02;
inline constexpr std::uint8_t kTagAnnouncement = 0x03;
inline constexpr std::uint8_t kTagPing = 0x04;
inline constexpr std::uint8_t kTagPong = 0x05;
inline constexpr std::uint8_t kTagIdentityCert = 0x10;
inline constexpr std::uint8_t kTagDelegationCert = 0x11;
inline constexpr std::uint8_t kTagAttributeKey = 0x12;
inline constexpr std::uint8_t kTagAbePublicKey = 0x13;
inline constexpr std::uint8_t kTagEnvelope = 0x20;
inline constexpr std::uint8_t kTagDeltaDoc = 0x21;
inline constexpr std::uint8_t kTagDirectoryDoc = 0x22;
inline constexpr std::uint8_t kTagCommandFile = 0x23;
inline constexpr std::uint8_t kTagPrefixLog = 0x24;
inline constexpr std::uint8_t kTagManifest = 0x25;

Bytes encodeIdentityCert(const IdentityCert& cert);
IdentityCert decodeIdentityCert(BytesView bytes);
Bytes encodeDelegationCert(const DelegationCert& cert);
void encodeDelegationCert(ByteWriter& w, const DelegationCert& cert);
DelegationCert decodeDelegationCert(BytesView bytes);
DelegationCert decodeDelegationCert(ByteReader& r);

/// Byte strings the certificate signatures cover (everything but the
/// signature itself, tag included).
Bytes identityCertSigned(const IdentityCert& cert);
Bytes delegationCertSigned(const DelegationCert& cert);

} // namespace wire

/// Pull request for named content. The nonce suppresses forwarding loops and
/// must be fresh per (re)transmission.
struct InterestPacket {
    Name name;
    std::uint64_t nonce = 0;
};

/// Named content with its secure binding: signature over name || content
/// under the name's principal key, or under a delegate key backed by a valid
/// delegation certificate.
struct DataPacket {
    Name name;
    Bytes content;
    Bytes signature;
    std::optional<DelegationCert> delegation;
};

enum class AnnouncementKind : std::uint8_t { Regular = 0, Modification = 1, Revocation = 2 };

/// Modification payload: everything a replica needs to decide whether to
/// fetch (name, version, version vector, optional delta link).
struct ModificationInfo {
    Name name;
    std::int64_t version = 0;
    VersionVector vv;
    std::optional<Name> deltaLink;
};

/// Signed prefix advertisement. Regular installs reachability (withdraw=true
/// removes it), Modification additionally invalidates stale cached content,
/// Revocation declares a key dead. The signature covers every field except
/// itself; signer is the prefix owner unless a delegation is attached.
struct Announcement {
    AnnouncementKind kind = AnnouncementKind::Regular;
    Prefix prefix;
    bool withdraw = false;                     // Regular only
    std::optional<ModificationInfo> modification; // Modification only
    std::optional<Digest> revokedKeyHash;      // Revocation only
    std::uint64_t nonce = 0;
    std::int64_t expiresAt = 0;
    std::optional<DelegationCert> delegation;
    Bytes signature;

    /// Key hash the signature must verify under.
    Digest signerKeyHash() const
    {
        return delegation ? delegation->delegateKeyHash : prefix.principal.publicKeyHash;
    }
};

Bytes encodeInterest(const InterestPacket& p);
InterestPacket decodeInterest(BytesView bytes);

Bytes encodeData(const DataPacket& p);
DataPacket decodeData(BytesView bytes);
/// name || content — the secure-binding message of Sign_P(N, C).
Bytes dataSignedMessage(const Name& name, BytesView content);
DataPacket makeDataPacket(const KeyPair& signer, const Name& name, Bytes content,
                          std::optional<DelegationCert> delegation = std::nullopt);

Bytes encodeAnnouncement(const Announcement& a);
Announcement decodeAnnouncement(BytesView bytes);
/// Everything the announcement signature covers (all fields except itself).
Bytes announcementSignedMessage(const Announcement& a);

/// Overlay liveness frames (maintenance traffic, not content plane).
struct PingFrame {
    std::uint64_t token = 0;
};
Bytes encodePing(const PingFrame& p, bool pong);

/// Returns the tag byte without consuming the frame.
std::uint8_t frameTag(BytesView frame);

} // namespace pcn
