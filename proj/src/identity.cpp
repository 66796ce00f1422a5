#include "pcn/identity.hpp"
#include "pcn/wire.hpp"

namespace pcn {

IdentityCert issueIdentity(const KeyPair& issuer, const std::string& subjectLabel,
                           const Bytes& subjectKey, std::int64_t now, std::int64_t lifetimeMs)
{
    IdentityCert cert;
    cert.subjectLabel = subjectLabel;
    cert.subjectKey = subjectKey;
    cert.issuerKeyHash = issuer.publicKeyHash();
    cert.issuedAt = now;
    cert.expiresAt = now + lifetimeMs;
    cert.signature = crypto::sign(issuer.key, wire::identityCertSigned(cert));
    return cert;
}

bool verifyIdentity(const IdentityCert& cert, BytesView issuerPublicKey, std::int64_t now)
{
    if (cert.expiresAt <= cert.issuedAt || now > cert.expiresAt)
        return false;
    if (crypto::sha256(issuerPublicKey) != cert.issuerKeyHash)
        return false;
    return crypto::verify(issuerPublicKey, wire::identityCertSigned(cert), cert.signature);
}

DelegationCert issueDelegation(const KeyPair& owner, const Prefix& prefix,
                               const Principal& delegate, std::int64_t now,
                               std::int64_t lifetimeMs)
{
    if (owner.publicKeyHash() != prefix.principal.publicKeyHash)
        fail(Errc::NotPrefixOwner, render(prefix));
    DelegationCert cert;
    cert.prefix = prefix;
    cert.delegateKeyHash = delegate.publicKeyHash;
    cert.expiresAt = now + lifetimeMs;
    cert.ownerSignature = crypto::sign(owner.key, wire::delegationCertSigned(cert));
    return cert;
}

bool verifyDelegation(const DelegationCert& cert, BytesView ownerPublicKey, std::int64_t now)
{
    if (now > cert.expiresAt)
        return false;
    if (crypto::sha256(ownerPublicKey) != cert.prefix.principal.publicKeyHash)
        return false;
    return crypto::verify(ownerPublicKey, wire::delegationCertSigned(cert), cert.ownerSignature);
}

// ---------------------------------------------------------------------------
// Interlock

Bytes mpzToBytes(const mpz_class& v)
{
    if (v == 0)
        return Bytes{0};
    std::size_t count = 0;
    Bytes out((mpz_sizeinbase(v.get_mpz_t(), 2) + 7) / 8);
    mpz_export(out.data(), &count, 1, 1, 1, 0, v.get_mpz_t());
    out.resize(count);
    return out;
}

mpz_class mpzFromBytes(BytesView b)
{
    mpz_class v;
    mpz_import(v.get_mpz_t(), b.size(), 1, 1, 1, 0, b.data());
    return v;
}

mpz_class hashToGroup(const mpz_class& p, std::string_view seed)
{
    for (std::uint32_t counter = 0;; ++counter) {
        ByteWriter w;
        w.raw(toBytes(seed));
        w.u32(counter);
        Digest d = crypto::sha256(w.bytes());
        mpz_class x = mpzFromBytes(BytesView(d.data(), d.size())) % p;
        mpz_class h;
        mpz_powm_ui(h.get_mpz_t(), x.get_mpz_t(), 2, p.get_mpz_t()); // land in QR subgroup
        if (h > 1)
            return h;
    }
}

InterlockGroup InterlockGroup::explicitGroup(unsigned long p, unsigned long g, unsigned long h)
{
    return InterlockGroup{mpz_class(p), mpz_class(g), mpz_class(h)};
}

InterlockGroup InterlockGroup::production(std::string_view hSeed)
{
    // RFC 3526 group 14 (2048-bit MODP safe prime).
    static const char* kModp2048 =
        "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74"
        "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437"
        "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
        "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05"
        "98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB"
        "9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B"
        "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718"
        "3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF";
    InterlockGroup grp;
    grp.p = mpz_class(kModp2048, 16);
    grp.g = 2;
    grp.h = hashToGroup(grp.p, hSeed);
    return grp;
}

mpz_class uniformBelow(const mpz_class& bound, Rng& rng)
{
    std::size_t bits = mpz_sizeinbase(bound.get_mpz_t(), 2);
    std::size_t nbytes = (bits + 7) / 8;
    unsigned topMask = bits % 8 ? (1u << (bits % 8)) - 1 : 0xff;
    for (;;) {
        Bytes buf = rng.bytes(nbytes);
        buf[0] &= static_cast<std::uint8_t>(topMask);
        mpz_class v = mpzFromBytes(buf);
        if (v < bound)
            return v;
    }
}

mpz_class pedersenCommit(const InterlockGroup& group, unsigned answer, const mpz_class& blind)
{
    mpz_class ga, hu;
    mpz_class a(answer);
    mpz_powm(ga.get_mpz_t(), group.g.get_mpz_t(), a.get_mpz_t(), group.p.get_mpz_t());
    mpz_powm(hu.get_mpz_t(), group.h.get_mpz_t(), blind.get_mpz_t(), group.p.get_mpz_t());
    return (ga * hu) % group.p;
}

InterlockSession::InterlockSession(InterlockGroup group, unsigned answerChoices, Rng& rng)
    : group_(std::move(group)), answerChoices_(answerChoices), rng_(rng)
{
}

mpz_class InterlockSession::commit(unsigned answer)
{
    return commitWithBlind(answer, uniformBelow(group_.p - 1, rng_));
}

mpz_class InterlockSession::commitWithBlind(unsigned answer, const mpz_class& blind)
{
    if (state_ != InterlockState::Init)
        fail(Errc::InvalidState, "commit after Init");
    if (answer >= answerChoices_)
        fail(Errc::AnswerOutOfRange, std::to_string(answer));
    answer_ = answer;
    blind_ = blind;
    commitment_ = pedersenCommit(group_, answer_, blind_);
    state_ = InterlockState::Committed;
    return commitment_;
}

void InterlockSession::receive(const mpz_class& peerCommitment)
{
    if (state_ != InterlockState::Committed)
        fail(Errc::InvalidState, "receive requires Committed");
    if (peerCommitment < 1 || peerCommitment >= group_.p)
        fail(Errc::CommitmentOutOfRange, peerCommitment.get_str());
    peerCommitment_ = peerCommitment;
    state_ = InterlockState::Exchanged;
}

bool InterlockSession::verifyPeer(unsigned peerAnswer, const mpz_class& peerBlind,
                                  unsigned expectedAnswer)
{
    if (state_ != InterlockState::Exchanged)
        fail(Errc::InvalidState, "verify requires Exchanged");
    bool ok = pedersenCommit(group_, peerAnswer, peerBlind) == peerCommitment_ &&
              peerAnswer == expectedAnswer;
    state_ = ok ? InterlockState::Verified : InterlockState::Failed;
    return ok;
}

} // namespace pcn
