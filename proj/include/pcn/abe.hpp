#pragma once

#include "pcn/crypto.hpp"
#include "pcn/policy.hpp"

#include <map>
#include <optional>

namespace pcn {

using Key32 = std::array<std::uint8_t, 32>;

namespace gf256 {
// Arithmetic in GF(2^8) with the AES polynomial x^8+x^4+x^3+x+1.
std::uint8_t mul(std::uint8_t a, std::uint8_t b);
std::uint8_t inv(std::uint8_t a); // a != 0
} // namespace gf256

/// One Shamir share: the evaluation point x (1-based) and the 32-byte value.
struct Share {
    std::uint8_t x = 0;
    Key32 y{};
};

/// Byte-wise k-of-n split of a 32-byte secret over GF(256).
std::vector<Share> shamirSplit(const Key32& secret, std::uint16_t k, std::uint16_t n, Rng& rng);
/// Lagrange interpolation at 0; requires exactly k distinct shares of a k-of-n split.
Key32 shamirCombine(const std::vector<Share>& shares);

/// Per-owner public attribute material: one X25519 point per defined
/// attribute, re-derived each epoch. Public data; safe to publish.
struct AbePublicKey {
    Principal owner;
    std::uint32_t epoch = 0;
    std::map<Attribute, Key32> attributePoints;
};

/// Owner keyring. masterKey is present only on owner devices and never leaves
/// the keystore (no wire format exists for it).
struct AbeKeyring {
    Principal owner;
    std::optional<Key32> masterKey;
    AbePublicKey publicKey;
    std::uint32_t epoch = 0;

    bool hasMaster() const { return masterKey.has_value(); }
};

/// Holder-side decryption key: one scalar per granted attribute, bound to an
/// epoch. Pooling scalars from different holders is not prevented (this
/// construction is not collusion resistant; see docs/access-control.md).
struct AttributeSecretKey {
    Principal holder;
    std::uint32_t epoch = 0;
    std::map<Attribute, Key32> scalars;

    AttributeSet attributes() const
    {
        AttributeSet s;
        for (const auto& [a, _] : scalars)
            s.insert(a);
        return s;
    }
};

/// Fresh keyring at epoch 0 with the given initial attribute universe.
/// The reserved "__owner__" attribute is always defined and never issued; it
/// encodes owner-only policies.
AbeKeyring abeSetup(const Principal& owner, const std::vector<Attribute>& universe, Rng& rng);

Attribute ownerOnlyAttribute(const Principal& owner);
PolicyTree ownerOnlyPolicy(const Principal& owner);

/// Define a new attribute (extends the public key in place).
void abeDefineAttribute(AbeKeyring& keyring, const Attribute& attribute);

/// Issue a secret key for an attribute set. Requires the master key.
AttributeSecretKey abeKeygen(const AbeKeyring& keyring, const AttributeSet& attrs,
                             const Principal& holder);

/// Lazy revocation: bump the epoch and re-derive attribute points. Existing
/// ciphertexts stay readable with old-epoch keys; new ones require re-issued
/// keys. Requires the master key.
AbeKeyring rekeyLazy(const AbeKeyring& keyring);

/// Key-encapsulation interface: wrap a 32-byte secret under a policy so that
/// exactly the attribute keys satisfying it can unwrap.
class AbeBackend {
public:
    virtual ~AbeBackend() = default;
    virtual std::string name() const = 0;
    virtual Bytes wrap(const AbePublicKey& pk, const PolicyTree& policy, const Key32& secret,
                       Rng& rng) const = 0;
    /// Errors: EpochMismatch, PolicyNotSatisfied, IntegrityFailure (tampered
    /// ciphertext despite satisfying attributes), MalformedEncoding.
    virtual Key32 unwrap(const AttributeSecretKey& sk, const PolicyTree& policy,
                         BytesView ciphertext) const = 0;
};

/// Default backend: Shamir shares over the policy tree, one share sealed per
/// leaf under an ECIES-style key (ephemeral scalar against the attribute
/// point). Decrypt-iff-satisfy holds; collusion resistance does not.
class ShamirDhBackend final : public AbeBackend {
public:
    std::string name() const override { return "shamir-dh-v1"; }
    Bytes wrap(const AbePublicKey& pk, const PolicyTree& policy, const Key32& secret,
               Rng& rng) const override;
    Key32 unwrap(const AttributeSecretKey& sk, const PolicyTree& policy,
                 BytesView ciphertext) const override;
    std::uint32_t ciphertextEpoch(BytesView ciphertext) const;
};

const AbeBackend& defaultAbeBackend();

/// Owner bypass: derive a secret key covering the given attributes straight
/// from the master key (owners can always read their own content).
AttributeSecretKey skFromMaster(const AbeKeyring& keyring, const AttributeSet& attrs);

/// Serialization for keystore files and PK publication.
Bytes encodeAbePublicKey(const AbePublicKey& pk);
AbePublicKey decodeAbePublicKey(BytesView bytes);
Bytes encodeAttributeSecretKey(const AttributeSecretKey& sk);
AttributeSecretKey decodeAttributeSecretKey(BytesView bytes);

} // namespace pcn
