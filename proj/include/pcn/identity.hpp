#pragma once

#include "pcn/crypto.hpp"
#include "pcn/naming.hpp"

#include <gmpxx.h>

#include <cstdint>
#include <optional>
#include <string>

namespace pcn {

using crypto::SigAlgorithm;

/// Signing key pair owned by a principal. All devices of a principal hold a
/// copy (installed at introduction time).
struct KeyPair {
    crypto::SigningKey key;

    const Bytes& publicKey() const { return key.publicKey; }
    Digest publicKeyHash() const { return key.publicKeyHash(); }
    Principal principal(std::string displayLabel) const
    {
        return Principal{publicKeyHash(), std::move(displayLabel)};
    }

    static KeyPair generate(Rng& rng) { return KeyPair{crypto::SigningKey::generate(rng)}; }
    static KeyPair fromSeed(const std::array<std::uint8_t, 32>& seed)
    {
        return KeyPair{crypto::SigningKey::fromSeed(seed)};
    }
};

inline constexpr std::int64_t kMsPerDay = 86'400'000;
inline constexpr std::int64_t kIdentityCertLifetimeMs = 365 * kMsPerDay;
inline constexpr std::int64_t kDelegationCertLifetimeMs = 30 * kMsPerDay;

/// Signed SPKI/SDSI-style local-name statement: "issuer says subject_key is
/// called subject_label".
struct IdentityCert {
    std::string subjectLabel;
    Bytes subjectKey;
    Digest issuerKeyHash{};
    std::int64_t issuedAt = 0;
    std::int64_t expiresAt = 0;
    Bytes signature;
};

IdentityCert issueIdentity(const KeyPair& issuer, const std::string& subjectLabel,
                           const Bytes& subjectKey, std::int64_t now,
                           std::int64_t lifetimeMs = kIdentityCertLifetimeMs);
bool verifyIdentity(const IdentityCert& cert, BytesView issuerPublicKey, std::int64_t now);

/// Owner-signed authorization for a delegate to announce (and publish under)
/// a prefix.
struct DelegationCert {
    Prefix prefix;
    Digest delegateKeyHash{};
    std::int64_t expiresAt = 0;
    Bytes ownerSignature;
};

DelegationCert issueDelegation(const KeyPair& owner, const Prefix& prefix,
                               const Principal& delegate, std::int64_t now,
                               std::int64_t lifetimeMs = kDelegationCertLifetimeMs);
bool verifyDelegation(const DelegationCert& cert, BytesView ownerPublicKey, std::int64_t now);

// ---------------------------------------------------------------------------
// Interlock protocol (commit-then-reveal over Pedersen commitments).
//
// Both parties answer a multiple-choice question, commit to the answer as
// x = g^a * h^u mod p with a fresh uniform blind u, exchange commitments, and
// only then reveal (a, u). An eavesdropper holding both commitments and the
// full answer list cannot confirm any candidate answer before reveal, which a
// plain hash commitment cannot guarantee.

struct InterlockGroup {
    mpz_class p; // prime modulus
    mpz_class g; // generator
    mpz_class h; // second generator, log_g(h) unknown to everyone

    /// Tiny group for exhaustive tests.
    static InterlockGroup explicitGroup(unsigned long p, unsigned long g, unsigned long h);
    /// 2048-bit MODP safe prime (RFC 3526 group 14), g = 2, h hashed to the
    /// quadratic-residue subgroup from a public seed so nobody knows log_g(h).
    static InterlockGroup production(std::string_view hSeed = "pcn-interlock-h-v1");
};

/// Derive h from a public seed: h = H(seed || counter)^2 mod p, skipping 0/1.
mpz_class hashToGroup(const mpz_class& p, std::string_view seed);

enum class InterlockState { Init, Committed, Exchanged, Verified, Failed };

class InterlockSession {
public:
    InterlockSession(InterlockGroup group, unsigned answerChoices, Rng& rng);

    /// Commit to an answer index. Draws a fresh blind; returns x = g^a h^u mod p.
    mpz_class commit(unsigned answer);
    /// Test hook: commit with an explicit blind instead of a random one.
    mpz_class commitWithBlind(unsigned answer, const mpz_class& blind);
    /// Store the peer's commitment; reveal is only permitted afterwards.
    void receive(const mpz_class& peerCommitment);
    /// Check the peer's opening against their commitment and the expected
    /// answer. Moves to Verified on success, Failed otherwise.
    bool verifyPeer(unsigned peerAnswer, const mpz_class& peerBlind, unsigned expectedAnswer);

    InterlockState state() const { return state_; }
    const InterlockGroup& group() const { return group_; }
    const mpz_class& commitment() const { return commitment_; }
    const mpz_class& blind() const { return blind_; }
    unsigned answer() const { return answer_; }
    const mpz_class& peerCommitment() const { return peerCommitment_; }

private:
    InterlockGroup group_;
    unsigned answerChoices_;
    Rng& rng_;
    unsigned answer_ = 0;
    mpz_class blind_;
    mpz_class commitment_;
    mpz_class peerCommitment_;
    InterlockState state_ = InterlockState::Init;
};

/// x = g^a * h^u mod p — shared by commit and verify.
mpz_class pedersenCommit(const InterlockGroup& group, unsigned answer, const mpz_class& blind);

/// Uniform mpz in [0, bound) via rejection sampling on the bit length.
mpz_class uniformBelow(const mpz_class& bound, Rng& rng);

Bytes mpzToBytes(const mpz_class& v);
mpz_class mpzFromBytes(BytesView b);

} // namespace pcn
