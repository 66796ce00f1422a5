#pragma once

#include "pcn/abe.hpp"
#include "pcn/identity.hpp"

namespace pcn {

/// Self-protecting payload carried by every access-controlled file:
///   (1) read-access policy            (clear)
///   (2) write-access policy           (clear)
///   (3) write-verify key              (clear public key)
///   (4) write-sign key                (ABE-wrapped under the write policy)
///   (5) body: content sealed under a fresh symmetric key, that key
///       ABE-wrapped under the read policy
///   (6) write signature over (name, version, body) — absent only on the
///       owner's original publication
struct SecureEnvelope {
    PolicyTree readPolicy = PolicyTree::attr(Attribute{});
    PolicyTree writePolicy = PolicyTree::attr(Attribute{});
    Bytes writeVerifyKey;
    Bytes wrappedWriteSignKey;
    Bytes body;
    Bytes writeSignature; // empty == absent
    std::uint32_t epoch = 0;

    bool hasWriteSignature() const { return !writeSignature.empty(); }
};

/// Wire layout: tag, epoch (u32be), then the six fields in order, each
/// u32be length-prefixed. Bit-exact; golden vectors live in tests/golden.
Bytes encodeEnvelope(const SecureEnvelope& env);
SecureEnvelope decodeEnvelope(BytesView bytes);

/// Owner-side encryption. Generates a fresh content key and a fresh write
/// sign/verify pair; no write signature (owner-original publication).
SecureEnvelope envelopeEncrypt(const AbePublicKey& pk, BytesView content,
                               const PolicyTree& readPolicy, const PolicyTree& writePolicy,
                               const KeyPair& owner, Rng& rng,
                               const AbeBackend& backend = defaultAbeBackend());

/// Recover the plaintext. Errors: PolicyNotSatisfied, EpochMismatch,
/// IntegrityFailure (tampered body or wrapping).
Bytes envelopeDecrypt(const SecureEnvelope& env, const AttributeSecretKey& sk,
                      const AbePublicKey& pk, const AbeBackend& backend = defaultAbeBackend());

/// Legitimate-writer update: unwraps the write-sign key (possible only when
/// the writer's attributes satisfy the write policy), re-encrypts the new
/// content under a fresh key at the public key's current epoch, and signs
/// (name, newVersion, body) into field 6. Policies and verify key carry over.
SecureEnvelope envelopeUpdate(const SecureEnvelope& env, BytesView newContent,
                              const AttributeSecretKey& writerSk, const AbePublicKey& pk,
                              const Name& name, std::int64_t newVersion, Rng& rng,
                              const AbeBackend& backend = defaultAbeBackend());

/// Pure signature check of field 6 against field 3 over (name, version, body).
/// Throws MissingSignature when field 6 is absent.
bool verifyWrite(const SecureEnvelope& env, const Name& name, std::int64_t version);

/// Owner bypass helpers (owners hold MK and can always read/update their own
/// content regardless of issued keys).
Bytes envelopeDecryptAsOwner(const SecureEnvelope& env, const AbeKeyring& keyring,
                             const AbeBackend& backend = defaultAbeBackend());
SecureEnvelope envelopeUpdateAsOwner(const SecureEnvelope& env, BytesView newContent,
                                     const AbeKeyring& keyring, const Name& name,
                                     std::int64_t newVersion, Rng& rng,
                                     const AbeBackend& backend = defaultAbeBackend());

} // namespace pcn
