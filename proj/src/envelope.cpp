#include "pcn/envelope.hpp"
#include "pcn/wire.hpp"

namespace pcn {

namespace {

// Field 5 internals: wrapped content key (u32-prefixed) followed by the
// AEAD-sealed content.
Bytes buildBody(const AbePublicKey& pk, const PolicyTree& readPolicy, BytesView content,
                Rng& rng, const AbeBackend& backend)
{
    Key32 contentKey{};
    rng.fill(contentKey.data(), contentKey.size());
    Bytes wrappedKey = backend.wrap(pk, readPolicy, contentKey, rng);
    Bytes sealed = crypto::aeadSeal(contentKey, content, rng);
    ByteWriter w;
    w.blob32(wrappedKey);
    w.raw(sealed);
    return w.take();
}

Bytes openBody(const SecureEnvelope& env, const AttributeSecretKey& sk,
               const AbeBackend& backend)
{
    ByteReader r(BytesView(env.body));
    Bytes wrappedKey = r.blob32();
    Bytes sealed = r.raw(r.remaining());
    Key32 contentKey = backend.unwrap(sk, env.readPolicy, wrappedKey);
    auto content = crypto::aeadOpen(contentKey, sealed);
    if (!content)
        fail(Errc::IntegrityFailure, "body authentication failed");
    return *content;
}

Bytes writeSignatureMessage(const Name& name, std::int64_t version, const Bytes& body)
{
    ByteWriter w;
    canonicalEncode(w, name.withoutVersion());
    w.i64(version);
    w.raw(body);
    return w.take();
}

} // namespace

Bytes encodeEnvelope(const SecureEnvelope& env)
{
    ByteWriter w;
    w.u8(wire::kTagEnvelope);
    w.u32(env.epoch);
    w.blob32(encodePolicy(env.readPolicy));
    w.blob32(encodePolicy(env.writePolicy));
    w.blob32(env.writeVerifyKey);
    w.blob32(env.wrappedWriteSignKey);
    w.blob32(env.body);
    w.blob32(env.writeSignature);
    return w.take();
}

SecureEnvelope decodeEnvelope(BytesView bytes)
{
    ByteReader r(bytes);
    if (r.u8() != wire::kTagEnvelope)
        fail(Errc::MalformedEncoding, "not an envelope");
    SecureEnvelope env;
    env.epoch = r.u32();
    env.readPolicy = decodePolicy(r.blob32());
    env.writePolicy = decodePolicy(r.blob32());
    env.writeVerifyKey = r.blob32();
    env.wrappedWriteSignKey = r.blob32();
    env.body = r.blob32();
    env.writeSignature = r.blob32();
    r.expectEnd();
    return env;
}

SecureEnvelope envelopeEncrypt(const AbePublicKey& pk, BytesView content,
                               const PolicyTree& readPolicy, const PolicyTree& writePolicy,
                               const KeyPair& owner, Rng& rng, const AbeBackend& backend)
{
    readPolicy.validate();
    writePolicy.validate();
    if (pk.owner.publicKeyHash != owner.publicKeyHash())
        fail(Errc::NotOwner, "public key does not belong to the publishing owner");

    SecureEnvelope env;
    env.epoch = pk.epoch;
    env.readPolicy = readPolicy;
    env.writePolicy = writePolicy;

    // fresh per-file write sign/verify pair; the sign half travels only
    // ABE-wrapped under the write policy
    auto signSeed = rng.seed32();
    KeyPair writeKey = KeyPair::fromSeed(signSeed);
    env.writeVerifyKey = writeKey.publicKey();
    env.wrappedWriteSignKey = backend.wrap(pk, writePolicy, signSeed, rng);

    env.body = buildBody(pk, readPolicy, content, rng, backend);
    return env;
}

Bytes envelopeDecrypt(const SecureEnvelope& env, const AttributeSecretKey& sk,
                      const AbePublicKey& pk, const AbeBackend& backend)
{
    (void)pk; // part of the Decrypt(PK, CT, SK) surface; unused by this backend
    return openBody(env, sk, backend);
}

SecureEnvelope envelopeUpdate(const SecureEnvelope& env, BytesView newContent,
                              const AttributeSecretKey& writerSk, const AbePublicKey& pk,
                              const Name& name, std::int64_t newVersion, Rng& rng,
                              const AbeBackend& backend)
{
    Key32 signSeed = backend.unwrap(writerSk, env.writePolicy, env.wrappedWriteSignKey);
    KeyPair writeKey = KeyPair::fromSeed(signSeed);

    SecureEnvelope next;
    next.epoch = pk.epoch;
    next.readPolicy = env.readPolicy;
    next.writePolicy = env.writePolicy;
    next.writeVerifyKey = env.writeVerifyKey;
    // re-wrap the same sign seed at the current epoch so lazy revocation
    // applies to writers as well as readers
    next.wrappedWriteSignKey = backend.wrap(pk, env.writePolicy, signSeed, rng);
    next.body = buildBody(pk, env.readPolicy, newContent, rng, backend);
    next.writeSignature =
        crypto::sign(writeKey.key, writeSignatureMessage(name, newVersion, next.body));
    return next;
}

bool verifyWrite(const SecureEnvelope& env, const Name& name, std::int64_t version)
{
    if (!env.hasWriteSignature())
        fail(Errc::MissingSignature, render(name));
    return crypto::verify(env.writeVerifyKey, writeSignatureMessage(name, version, env.body),
                          env.writeSignature);
}

Bytes envelopeDecryptAsOwner(const SecureEnvelope& env, const AbeKeyring& keyring,
                             const AbeBackend& backend)
{
    // the master key can derive scalars for any epoch, so target the
    // envelope's epoch rather than the keyring's current one
    AbeKeyring atEnvelopeEpoch = keyring;
    atEnvelopeEpoch.epoch = env.epoch;
    auto leaves = env.readPolicy.leaves();
    AttributeSecretKey sk =
        skFromMaster(atEnvelopeEpoch, AttributeSet(leaves.begin(), leaves.end()));
    return openBody(env, sk, backend);
}

SecureEnvelope envelopeUpdateAsOwner(const SecureEnvelope& env, BytesView newContent,
                                     const AbeKeyring& keyring, const Name& name,
                                     std::int64_t newVersion, Rng& rng, const AbeBackend& backend)
{
    auto leaves = env.writePolicy.leaves();
    AbeKeyring atEnvelopeEpoch = keyring;
    atEnvelopeEpoch.epoch = env.epoch;
    AttributeSecretKey sk =
        skFromMaster(atEnvelopeEpoch, AttributeSet(leaves.begin(), leaves.end()));
    return envelopeUpdate(env, newContent, sk, keyring.publicKey, name, newVersion, rng, backend);
}

} // namespace pcn
