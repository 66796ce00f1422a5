#include "pcn/abe.hpp"
#include "pcn/errors.hpp"
#include "pcn/wire.hpp"

#include <algorithm>

namespace pcn {

namespace gf256 {

namespace {
struct Tables {
    std::uint8_t exp[512];
    std::uint8_t log[256];
    Tables()
    {
        std::uint16_t x = 1;
        for (int i = 0; i < 255; ++i) {
            exp[i] = static_cast<std::uint8_t>(x);
            log[x] = static_cast<std::uint8_t>(i);
            // multiply by the generator 0x03
            x = static_cast<std::uint16_t>(x ^ (x << 1));
            if (x & 0x100)
                x ^= 0x11b;
        }
        for (int i = 255; i < 512; ++i)
            exp[i] = exp[i - 255];
        log[0] = 0;
    }
};
const Tables& tables()
{
    static const Tables t;
    return t;
}
} // namespace

std::uint8_t mul(std::uint8_t a, std::uint8_t b)
{
    if (a == 0 || b == 0)
        return 0;
    const Tables& t = tables();
    return t.exp[t.log[a] + t.log[b]];
}

std::uint8_t inv(std::uint8_t a)
{
    const Tables& t = tables();
    return t.exp[255 - t.log[a]];
}

} // namespace gf256

std::vector<Share> shamirSplit(const Key32& secret, std::uint16_t k, std::uint16_t n, Rng& rng)
{
    if (k < 1 || k > n || n > 255)
        fail(Errc::MalformedPolicy, "share parameters out of range");
    // coefficients[d][byte]: degree-d coefficient for each secret byte
    std::vector<Key32> coeffs(k);
    coeffs[0] = secret;
    for (std::uint16_t d = 1; d < k; ++d)
        rng.fill(coeffs[d].data(), coeffs[d].size());

    std::vector<Share> shares(n);
    for (std::uint16_t i = 0; i < n; ++i) {
        auto x = static_cast<std::uint8_t>(i + 1);
        shares[i].x = x;
        for (std::size_t b = 0; b < 32; ++b) {
            std::uint8_t acc = 0; // Horner, highest degree first
            for (int d = k - 1; d >= 0; --d)
                acc = static_cast<std::uint8_t>(gf256::mul(acc, x) ^ coeffs[d][b]);
            shares[i].y[b] = acc;
        }
    }
    return shares;
}

Key32 shamirCombine(const std::vector<Share>& shares)
{
    Key32 out{};
    for (std::size_t i = 0; i < shares.size(); ++i) {
        std::uint8_t li = 1; // Lagrange basis at 0
        for (std::size_t j = 0; j < shares.size(); ++j) {
            if (i == j)
                continue;
            std::uint8_t num = shares[j].x;
            auto den = static_cast<std::uint8_t>(shares[i].x ^ shares[j].x);
            li = gf256::mul(li, gf256::mul(num, gf256::inv(den)));
        }
        for (std::size_t b = 0; b < 32; ++b)
            out[b] = static_cast<std::uint8_t>(out[b] ^ gf256::mul(shares[i].y[b], li));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Key derivation

namespace {

Bytes scalarContext(const Attribute& a, std::uint32_t epoch)
{
    ByteWriter w;
    w.raw(toBytes("pcn-abe-scalar"));
    w.u32(epoch);
    w.raw(a.authority.publicKeyHash);
    w.str16(a.name);
    return w.take();
}

Key32 attributeScalar(const Key32& masterKey, const Attribute& a, std::uint32_t epoch)
{
    return crypto::dhClampScalar(crypto::kdf(BytesView(masterKey), scalarContext(a, epoch)));
}

Key32 leafKey(const Key32& shared, const Attribute& a, std::uint32_t epoch)
{
    ByteWriter w;
    w.raw(toBytes("pcn-abe-leaf"));
    w.u32(epoch);
    w.raw(a.authority.publicKeyHash);
    w.str16(a.name);
    return crypto::kdf(BytesView(shared), w.bytes());
}

void derivePoints(AbeKeyring& keyring)
{
    keyring.publicKey.owner = keyring.owner;
    keyring.publicKey.epoch = keyring.epoch;
    for (auto& [attr, point] : keyring.publicKey.attributePoints)
        point = crypto::dhBasePoint(attributeScalar(*keyring.masterKey, attr, keyring.epoch));
}

} // namespace

Attribute ownerOnlyAttribute(const Principal& owner)
{
    return Attribute{"__owner__", owner};
}

PolicyTree ownerOnlyPolicy(const Principal& owner)
{
    return PolicyTree::attr(ownerOnlyAttribute(owner));
}

AbeKeyring abeSetup(const Principal& owner, const std::vector<Attribute>& universe, Rng& rng)
{
    AbeKeyring keyring;
    keyring.owner = owner;
    keyring.masterKey = rng.seed32();
    keyring.epoch = 0;
    keyring.publicKey.attributePoints[ownerOnlyAttribute(owner)] = {};
    for (const auto& a : universe)
        keyring.publicKey.attributePoints[a] = {};
    derivePoints(keyring);
    return keyring;
}

void abeDefineAttribute(AbeKeyring& keyring, const Attribute& attribute)
{
    if (!keyring.hasMaster())
        fail(Errc::MissingMasterKey, "define requires the master key");
    keyring.publicKey.attributePoints[attribute] =
        crypto::dhBasePoint(attributeScalar(*keyring.masterKey, attribute, keyring.epoch));
}

AttributeSecretKey abeKeygen(const AbeKeyring& keyring, const AttributeSet& attrs,
                             const Principal& holder)
{
    if (!keyring.hasMaster())
        fail(Errc::MissingMasterKey, "keygen requires the master key");
    if (attrs.empty())
        fail(Errc::EmptyAttributeSet, "keygen with no attributes");
    AttributeSecretKey sk;
    sk.holder = holder;
    sk.epoch = keyring.epoch;
    for (const auto& a : attrs)
        sk.scalars[a] = attributeScalar(*keyring.masterKey, a, keyring.epoch);
    return sk;
}

AbeKeyring rekeyLazy(const AbeKeyring& keyring)
{
    if (!keyring.hasMaster())
        fail(Errc::MissingMasterKey, "rekey requires the master key");
    AbeKeyring next = keyring;
    next.epoch += 1;
    derivePoints(next);
    return next;
}

AttributeSecretKey skFromMaster(const AbeKeyring& keyring, const AttributeSet& attrs)
{
    if (!keyring.hasMaster())
        fail(Errc::MissingMasterKey, "owner bypass requires the master key");
    AttributeSecretKey sk;
    sk.holder = keyring.owner;
    sk.epoch = keyring.epoch;
    for (const auto& a : attrs)
        sk.scalars[a] = attributeScalar(*keyring.masterKey, a, keyring.epoch);
    return sk;
}

// ---------------------------------------------------------------------------
// Shamir-DH backend

namespace {

constexpr std::uint8_t kBackendTag = 0x01;

/// Recursive wrap: every threshold node splits its secret k-of-n among its
/// children; every leaf seals its share under the attribute's ECIES key.
void wrapNode(const AbePublicKey& pk, const PolicyTree& node, const Key32& secret,
              const Key32& ephemeralScalar, Rng& rng, ByteWriter& leaves)
{
    if (node.isLeaf()) {
        const Attribute& a = node.leaf().attribute;
        auto it = pk.attributePoints.find(a);
        if (it == pk.attributePoints.end())
            fail(Errc::UnknownAttribute, a.name);
        auto shared = crypto::dhShared(ephemeralScalar, it->second);
        if (!shared)
            fail(Errc::IntegrityFailure, "degenerate attribute point");
        Bytes sealed = crypto::aeadSeal(leafKey(*shared, a, pk.epoch), BytesView(secret), rng);
        leaves.blob32(sealed);
        return;
    }
    const auto& t = node.threshold();
    if (t.children.size() > 255)
        fail(Errc::MalformedPolicy, "more than 255 children");
    auto shares = shamirSplit(secret, t.k, static_cast<std::uint16_t>(t.children.size()), rng);
    for (std::size_t i = 0; i < t.children.size(); ++i)
        wrapNode(pk, t.children[i], shares[i].y, ephemeralScalar, rng, leaves);
}

struct UnwrapCtx {
    const AttributeSecretKey& sk;
    std::uint32_t epoch;
    const Key32& ephemeralPoint;
    const std::vector<Bytes>& sealedLeaves;
    std::size_t cursor = 0;
};

std::optional<Key32> unwrapNode(UnwrapCtx& ctx, const PolicyTree& node)
{
    if (node.isLeaf()) {
        if (ctx.cursor >= ctx.sealedLeaves.size())
            fail(Errc::MalformedEncoding, "leaf count mismatch");
        const Bytes& sealed = ctx.sealedLeaves[ctx.cursor++];
        const Attribute& a = node.leaf().attribute;
        auto it = ctx.sk.scalars.find(a);
        if (it == ctx.sk.scalars.end())
            return std::nullopt;
        auto shared = crypto::dhShared(it->second, ctx.ephemeralPoint);
        if (!shared)
            return std::nullopt;
        auto opened = crypto::aeadOpen(leafKey(*shared, a, ctx.epoch), sealed);
        if (!opened || opened->size() != 32)
            return std::nullopt;
        Key32 y;
        std::copy(opened->begin(), opened->end(), y.begin());
        return y;
    }
    const auto& t = node.threshold();
    std::vector<Share> got;
    for (std::size_t i = 0; i < t.children.size(); ++i) {
        auto sub = unwrapNode(ctx, t.children[i]);
        if (sub && got.size() < t.k)
            got.push_back(Share{static_cast<std::uint8_t>(i + 1), *sub});
        // keep walking even once satisfied: the cursor must pass every leaf
    }
    if (got.size() < t.k)
        return std::nullopt;
    if (t.k == 1)
        return got[0].y;
    return shamirCombine(got);
}

} // namespace

Bytes ShamirDhBackend::wrap(const AbePublicKey& pk, const PolicyTree& policy, const Key32& secret,
                            Rng& rng) const
{
    policy.validate();
    Key32 ephemeral = crypto::dhClampScalar(rng.seed32());
    ByteWriter leaves;
    wrapNode(pk, policy, secret, ephemeral, rng, leaves);

    ByteWriter w;
    w.u8(kBackendTag);
    w.u32(pk.epoch);
    w.raw(crypto::dhBasePoint(ephemeral));
    auto leafCount = policy.leaves().size();
    w.u16(static_cast<std::uint16_t>(leafCount));
    w.raw(leaves.bytes());
    return w.take();
}

std::uint32_t ShamirDhBackend::ciphertextEpoch(BytesView ciphertext) const
{
    ByteReader r(ciphertext);
    if (r.u8() != kBackendTag)
        fail(Errc::MalformedEncoding, "unknown ABE backend tag");
    return r.u32();
}

Key32 ShamirDhBackend::unwrap(const AttributeSecretKey& sk, const PolicyTree& policy,
                              BytesView ciphertext) const
{
    ByteReader r(ciphertext);
    if (r.u8() != kBackendTag)
        fail(Errc::MalformedEncoding, "unknown ABE backend tag");
    std::uint32_t epoch = r.u32();
    Key32 ephemeralPoint = r.digest();
    std::uint16_t count = r.u16();
    std::vector<Bytes> sealedLeaves;
    sealedLeaves.reserve(count);
    for (std::uint16_t i = 0; i < count; ++i)
        sealedLeaves.push_back(r.blob32());
    r.expectEnd();

    if (policy.leaves().size() != count)
        fail(Errc::MalformedEncoding, "policy/ciphertext leaf mismatch");
    if (epoch != sk.epoch)
        fail(Errc::EpochMismatch,
             "key epoch " + std::to_string(sk.epoch) + " vs ciphertext " + std::to_string(epoch));
    if (!policySatisfied(policy, sk.attributes()))
        fail(Errc::PolicyNotSatisfied, renderPolicy(policy));

    UnwrapCtx ctx{sk, epoch, ephemeralPoint, sealedLeaves};
    auto secret = unwrapNode(ctx, policy);
    if (!secret)
        fail(Errc::IntegrityFailure, "shares unrecoverable despite satisfying attributes");
    return *secret;
}

const AbeBackend& defaultAbeBackend()
{
    static const ShamirDhBackend backend;
    return backend;
}

// ---------------------------------------------------------------------------
// Serialization

Bytes encodeAbePublicKey(const AbePublicKey& pk)
{
    ByteWriter w;
    w.u8(wire::kTagAbePublicKey);
    w.raw(pk.owner.publicKeyHash);
    w.u32(pk.epoch);
    w.u16(static_cast<std::uint16_t>(pk.attributePoints.size()));
    for (const auto& [attr, point] : pk.attributePoints) {
        w.str16(attr.name);
        w.raw(attr.authority.publicKeyHash);
        w.raw(point);
    }
    return w.take();
}

AbePublicKey decodeAbePublicKey(BytesView bytes)
{
    ByteReader r(bytes);
    if (r.u8() != wire::kTagAbePublicKey)
        fail(Errc::MalformedEncoding, "not an ABE public key");
    AbePublicKey pk;
    pk.owner.publicKeyHash = r.digest();
    pk.epoch = r.u32();
    std::uint16_t count = r.u16();
    for (std::uint16_t i = 0; i < count; ++i) {
        Attribute a;
        a.name = r.str16();
        a.authority.publicKeyHash = r.digest();
        pk.attributePoints[a] = r.digest();
    }
    r.expectEnd();
    return pk;
}

Bytes encodeAttributeSecretKey(const AttributeSecretKey& sk)
{
    ByteWriter w;
    w.u8(wire::kTagAttributeKey);
    w.raw(sk.holder.publicKeyHash);
    w.u32(sk.epoch);
    w.u16(static_cast<std::uint16_t>(sk.scalars.size()));
    for (const auto& [attr, scalar] : sk.scalars) {
        w.str16(attr.name);
        w.raw(attr.authority.publicKeyHash);
        w.raw(scalar);
    }
    return w.take();
}

AttributeSecretKey decodeAttributeSecretKey(BytesView bytes)
{
    ByteReader r(bytes);
    if (r.u8() != wire::kTagAttributeKey)
        fail(Errc::MalformedEncoding, "not an attribute key");
    AttributeSecretKey sk;
    sk.holder.publicKeyHash = r.digest();
    sk.epoch = r.u32();
    std::uint16_t count = r.u16();
    for (std::uint16_t i = 0; i < count; ++i) {
        Attribute a;
        a.name = r.str16();
        a.authority.publicKeyHash = r.digest();
        sk.scalars[a] = r.digest();
    }
    r.expectEnd();
    return sk;
}

} // namespace pcn
