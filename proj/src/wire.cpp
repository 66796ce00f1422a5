#include "pcn/wire.hpp"
#include "pcn/crypto.hpp"

namespace pcn {

namespace {

void encodeVvInline(ByteWriter& w, const VersionVector& vv)
{
    encodeVv(w, vv);
}

} // namespace

void encodeVv(ByteWriter& w, const VersionVector& vv)
{
    const auto& counters = vv.counters();
    if (counters.size() > 0xffff)
        fail(Errc::MalformedEncoding, "version vector too large");
    w.u16(static_cast<std::uint16_t>(counters.size()));
    for (const auto& [device, count] : counters) {
        w.str16(device);
        w.u64(count);
    }
}

VersionVector decodeVv(ByteReader& r)
{
    VersionVector vv;
    std::uint16_t count = r.u16();
    for (std::uint16_t i = 0; i < count; ++i) {
        std::string device = r.str16();
        vv.set(device, r.u64());
    }
    return vv;
}

namespace wire {

Bytes identityCertSigned(const IdentityCert& cert)
{
    ByteWriter w;
    w.u8(kTagIdentityCert);
    w.str16(cert.subjectLabel);
    w.blob16(cert.subjectKey);
    w.raw(cert.issuerKeyHash);
    w.i64(cert.issuedAt);
    w.i64(cert.expiresAt);
    return w.take();
}

Bytes encodeIdentityCert(const IdentityCert& cert)
{
    ByteWriter w;
    w.raw(identityCertSigned(cert));
    w.blob16(cert.signature);
    return w.take();
}

IdentityCert decodeIdentityCert(BytesView bytes)
{
    ByteReader r(bytes);
    if (r.u8() != kTagIdentityCert)
        fail(Errc::MalformedEncoding, "not an identity cert");
    IdentityCert cert;
    cert.subjectLabel = r.str16();
    cert.subjectKey = r.blob16();
    cert.issuerKeyHash = r.digest();
    cert.issuedAt = r.i64();
    cert.expiresAt = r.i64();
    cert.signature = r.blob16();
    r.expectEnd();
    return cert;
}

Bytes delegationCertSigned(const DelegationCert& cert)
{
    ByteWriter w;
    w.u8(kTagDelegationCert);
    canonicalEncode(w, cert.prefix);
    w.raw(cert.delegateKeyHash);
    w.i64(cert.expiresAt);
    return w.take();
}

void encodeDelegationCert(ByteWriter& w, const DelegationCert& cert)
{
    w.raw(delegationCertSigned(cert));
    w.blob16(cert.ownerSignature);
}

Bytes encodeDelegationCert(const DelegationCert& cert)
{
    ByteWriter w;
    encodeDelegationCert(w, cert);
    return w.take();
}

DelegationCert decodeDelegationCert(ByteReader& r)
{
    if (r.u8() != kTagDelegationCert)
        fail(Errc::MalformedEncoding, "not a delegation cert");
    DelegationCert cert;
    cert.prefix = canonicalDecodePrefix(r);
    cert.delegateKeyHash = r.digest();
    cert.expiresAt = r.i64();
    cert.ownerSignature = r.blob16();
    return cert;
}

DelegationCert decodeDelegationCert(BytesView bytes)
{
    ByteReader r(bytes);
    DelegationCert cert = decodeDelegationCert(r);
    r.expectEnd();
    return cert;
}

} // namespace wire

// ---------------------------------------------------------------------------
// Interest

Bytes encodeInterest(const InterestPacket& p)
{
    ByteWriter w;
    w.u8(wire::kTagInterest);
    canonicalEncode(w, p.name);
    w.u64(p.nonce);
    return w.take();
}

InterestPacket decodeInterest(BytesView bytes)
{
    ByteReader r(bytes);
    if (r.u8() != wire::kTagInterest)
        fail(Errc::MalformedEncoding, "not an interest");
    InterestPacket p;
    p.name = canonicalDecode(r);
    p.nonce = r.u64();
    r.expectEnd();
    return p;
}

// ---------------------------------------------------------------------------
// Data

Bytes dataSignedMessage(const Name& name, BytesView content)
{
    ByteWriter w;
    canonicalEncode(w, name);
    w.raw(content);
    return w.take();
}

Bytes encodeData(const DataPacket& p)
{
    ByteWriter w;
    w.u8(wire::kTagData);
    canonicalEncode(w, p.name);
    w.blob32(p.content);
    w.blob16(p.signature);
    w.u8(p.delegation ? 1 : 0);
    if (p.delegation)
        wire::encodeDelegationCert(w, *p.delegation);
    return w.take();
}

DataPacket decodeData(BytesView bytes)
{
    ByteReader r(bytes);
    if (r.u8() != wire::kTagData)
        fail(Errc::MalformedEncoding, "not a data packet");
    DataPacket p;
    p.name = canonicalDecode(r);
    p.content = r.blob32();
    p.signature = r.blob16();
    if (r.u8())
        p.delegation = wire::decodeDelegationCert(r);
    r.expectEnd();
    return p;
}

DataPacket makeDataPacket(const KeyPair& signer, const Name& name, Bytes content,
                          std::optional<DelegationCert> delegation)
{
    DataPacket p;
    p.name = name;
    p.content = std::move(content);
    p.signature = crypto::sign(signer.key, dataSignedMessage(name, p.content));
    p.delegation = std::move(delegation);
    return p;
}

// ---------------------------------------------------------------------------
// Announcement

Bytes announcementSignedMessage(const Announcement& a)
{
    ByteWriter w;
    w.u8(wire::kTagAnnouncement);
    w.u8(static_cast<std::uint8_t>(a.kind));
    canonicalEncode(w, a.prefix);
    switch (a.kind) {
    case AnnouncementKind::Regular:
        w.u8(a.withdraw ? 1 : 0);
        break;
    case AnnouncementKind::Modification: {
        if (!a.modification)
            fail(Errc::MalformedEncoding, "modification payload missing");
        const auto& m = *a.modification;
        canonicalEncode(w, m.name);
        w.i64(m.version);
        encodeVvInline(w, m.vv);
        w.u8(m.deltaLink ? 1 : 0);
        if (m.deltaLink)
            canonicalEncode(w, *m.deltaLink);
        break;
    }
    case AnnouncementKind::Revocation:
        if (!a.revokedKeyHash)
            fail(Errc::MalformedEncoding, "revocation payload missing");
        w.raw(*a.revokedKeyHash);
        break;
    }
    w.u64(a.nonce);
    w.i64(a.expiresAt);
    w.u8(a.delegation ? 1 : 0);
    if (a.delegation)
        wire::encodeDelegationCert(w, *a.delegation);
    return w.take();
}

Bytes encodeAnnouncement(const Announcement& a)
{
    ByteWriter w;
    w.raw(announcementSignedMessage(a));
    w.blob16(a.signature);
    return w.take();
}

Announcement decodeAnnouncement(BytesView bytes)
{
    ByteReader r(bytes);
    if (r.u8() != wire::kTagAnnouncement)
        fail(Errc::MalformedEncoding, "not an announcement");
    Announcement a;
    std::uint8_t kind = r.u8();
    if (kind > 2)
        fail(Errc::MalformedEncoding, "unknown announcement kind");
    a.kind = static_cast<AnnouncementKind>(kind);
    a.prefix = canonicalDecodePrefix(r);
    switch (a.kind) {
    case AnnouncementKind::Regular:
        a.withdraw = r.u8() != 0;
        break;
    case AnnouncementKind::Modification: {
        ModificationInfo m;
        m.name = canonicalDecode(r);
        m.version = r.i64();
        m.vv = decodeVv(r);
        if (r.u8())
            m.deltaLink = canonicalDecode(r);
        a.modification = std::move(m);
        break;
    }
    case AnnouncementKind::Revocation:
        a.revokedKeyHash = r.digest();
        break;
    }
    a.nonce = r.u64();
    a.expiresAt = r.i64();
    if (r.u8())
        a.delegation = wire::decodeDelegationCert(r);
    a.signature = r.blob16();
    r.expectEnd();
    return a;
}

Bytes encodePing(const PingFrame& p, bool pong)
{
    ByteWriter w;
    w.u8(pong ? wire::kTagPong : wire::kTagPing);
    w.u64(p.token);
    return w.take();
}

std::uint8_t frameTag(BytesView frame)
{
    if (frame.empty())
        fail(Errc::MalformedEncoding, "empty frame");
    return frame[0];
}

} // namespace pcn
