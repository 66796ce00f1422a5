#include "pcn/sync.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace pcn {

VvOrder VersionVector::compare(const VersionVector& a, const VersionVector& b)
{
    bool aAbove = false;
    bool bAbove = false;
    std::set<DeviceId> devices;
    for (const auto& [d, _] : a.counters_)
        devices.insert(d);
    for (const auto& [d, _] : b.counters_)
        devices.insert(d);
    for (const auto& d : devices) {
        std::uint64_t av = a.get(d);
        std::uint64_t bv = b.get(d);
        if (av > bv)
            aAbove = true;
        else if (bv > av)
            bAbove = true;
    }
    if (aAbove && bAbove)
        return VvOrder::Concurrent;
    if (aAbove)
        return VvOrder::Dominates;
    if (bAbove)
        return VvOrder::DominatedBy;
    return VvOrder::Equal;
}

VersionVector VersionVector::join(const VersionVector& a, const VersionVector& b)
{
    VersionVector out = a;
    for (const auto& [d, v] : b.counters_)
        out.counters_[d] = std::max(out.get(d), v);
    return out;
}

std::string VersionVector::str() const
{
    std::string out = "{";
    bool first = true;
    for (const auto& [d, v] : counters_) {
        if (!first)
            out += ",";
        first = false;
        out += d + ":" + std::to_string(v);
    }
    out += "}";
    return out;
}

const char* replicaStateName(ReplicaState s)
{
    switch (s) {
    case ReplicaState::Clean: return "Clean";
    case ReplicaState::Dirty: return "Dirty";
    case ReplicaState::Conflicted: return "Conflicted";
    }
    return "?";
}

std::string exportRevisionHistory(const Replica& replica)
{
    std::string out;
    for (const auto& rec : replica.history) {
        out += toHex(BytesView(rec.author.data(), rec.author.size()));
        out += " " + std::to_string(rec.timestamp);
        out += " " + std::to_string(rec.version);
        out += " " + toHex(BytesView(rec.contentHash.data(), rec.contentHash.size()));
        out += "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Directory documents

void DirectoryDoc::put(const std::string& component, const Name& target, const DeviceId& device)
{
    DirEntry& e = entries[component];
    e.target = target;
    e.tombstone = false;
    e.vv.bump(device);
}

void DirectoryDoc::remove(const std::string& component, const DeviceId& device)
{
    auto it = entries.find(component);
    if (it == entries.end())
        return;
    it->second.tombstone = true;
    it->second.vv.bump(device);
}

std::vector<std::string> DirectoryDoc::listing() const
{
    std::vector<std::string> out;
    for (const auto& [c, e] : entries)
        if (!e.tombstone)
            out.push_back(c);
    return out;
}

Bytes encodeDirectory(const DirectoryDoc& doc)
{
    ByteWriter w;
    w.u8(wire::kTagDirectoryDoc);
    w.u32(static_cast<std::uint32_t>(doc.entries.size()));
    for (const auto& [component, e] : doc.entries) {
        w.str16(component);
        canonicalEncode(w, e.target);
        encodeVv(w, e.vv);
        w.u8(e.tombstone ? 1 : 0);
    }
    return w.take();
}

DirectoryDoc decodeDirectory(BytesView bytes)
{
    ByteReader r(bytes);
    if (r.u8() != wire::kTagDirectoryDoc)
        fail(Errc::MalformedEncoding, "not a directory doc");
    DirectoryDoc doc;
    std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string component = r.str16();
        DirEntry e;
        e.target = canonicalDecode(r);
        e.vv = decodeVv(r);
        e.tombstone = r.u8() != 0;
        doc.entries[component] = std::move(e);
    }
    r.expectEnd();
    return doc;
}

bool looksLikeDirectory(BytesView plaintext)
{
    return !plaintext.empty() && plaintext[0] == wire::kTagDirectoryDoc;
}

namespace {

/// Deterministic rename suffix for a name conflict: the lexicographically
/// largest device that advanced this entry past the other side.
std::string renameSuffixDevice(const VersionVector& mine, const VersionVector& other)
{
    std::string best;
    for (const auto& [d, v] : mine.counters())
        if (v > other.get(d) && d > best)
            best = d;
    return best;
}

} // namespace

std::pair<DirectoryDoc, std::vector<DirConflict>> mergeDirectory(const DirectoryDoc& local,
                                                                 const DirectoryDoc& remote)
{
    DirectoryDoc merged;
    std::vector<DirConflict> conflicts;

    std::set<std::string> keys;
    for (const auto& [c, _] : local.entries)
        keys.insert(c);
    for (const auto& [c, _] : remote.entries)
        keys.insert(c);

    for (const auto& key : keys) {
        auto lit = local.entries.find(key);
        auto rit = remote.entries.find(key);
        if (rit == remote.entries.end()) {
            merged.entries[key] = lit->second; // never seen by remote: keep
            continue;
        }
        if (lit == local.entries.end()) {
            merged.entries[key] = rit->second;
            continue;
        }
        const DirEntry& a = lit->second;
        const DirEntry& b = rit->second;
        VvOrder order = VersionVector::compare(a.vv, b.vv);
        if (order == VvOrder::Equal || order == VvOrder::Dominates) {
            merged.entries[key] = a;
            continue;
        }
        if (order == VvOrder::DominatedBy) {
            merged.entries[key] = b;
            continue;
        }
        // concurrent modifications of the same entry
        if (a.tombstone && b.tombstone) {
            DirEntry e = a;
            e.vv = VersionVector::join(a.vv, b.vv);
            merged.entries[key] = e;
            continue;
        }
        if (a.tombstone != b.tombstone) {
            // remove/update: the update wins, the removal is surfaced
            const DirEntry& live = a.tombstone ? b : a;
            DirEntry e = live;
            e.vv = VersionVector::join(a.vv, b.vv);
            merged.entries[key] = e;
            conflicts.push_back({key, DirConflictKind::RemoveUpdate});
            continue;
        }
        if (a.target == b.target) {
            DirEntry e = a;
            e.vv = VersionVector::join(a.vv, b.vv);
            merged.entries[key] = e;
            continue;
        }
        // name conflict: same new name, different targets — keep both under
        // deterministic rename suffixes
        DirEntry ea = a;
        DirEntry eb = b;
        std::string sa = key + "#" + renameSuffixDevice(a.vv, b.vv);
        std::string sb = key + "#" + renameSuffixDevice(b.vv, a.vv);
        merged.entries[sa] = ea;
        merged.entries[sb] = eb;
        // a tombstone marks the disputed name itself as resolved
        DirEntry gone;
        gone.target = a.target;
        gone.tombstone = true;
        gone.vv = VersionVector::join(a.vv, b.vv);
        merged.entries[key] = gone;
        conflicts.push_back({key, DirConflictKind::NameConflict});
    }
    return {std::move(merged), std::move(conflicts)};
}

// ---------------------------------------------------------------------------
// Delta transfer

Bytes encodeDelta(const DeltaDoc& doc)
{
    ByteWriter w;
    w.u8(wire::kTagDeltaDoc);
    w.i64(doc.baseVersion);
    w.u32(static_cast<std::uint32_t>(doc.records.size()));
    for (const auto& rec : doc.records) {
        w.u64(rec.offset);
        w.u64(rec.deleteLen);
        w.blob32(rec.insert);
    }
    return w.take();
}

DeltaDoc decodeDelta(BytesView bytes)
{
    ByteReader r(bytes);
    if (r.u8() != wire::kTagDeltaDoc)
        fail(Errc::MalformedEncoding, "not a delta doc");
    DeltaDoc doc;
    doc.baseVersion = r.i64();
    std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        DeltaRecord rec;
        rec.offset = r.u64();
        rec.deleteLen = r.u64();
        rec.insert = r.blob32();
        doc.records.push_back(std::move(rec));
    }
    r.expectEnd();
    return doc;
}

DeltaDoc makeDelta(BytesView baseBytes, BytesView newBytes, std::int64_t baseVersion)
{
    DeltaDoc doc;
    doc.baseVersion = baseVersion;

    std::size_t prefix = 0;
    std::size_t maxPrefix = std::min(baseBytes.size(), newBytes.size());
    while (prefix < maxPrefix && baseBytes[prefix] == newBytes[prefix])
        ++prefix;
    std::size_t suffix = 0;
    std::size_t maxSuffix = maxPrefix - prefix;
    while (suffix < maxSuffix &&
           baseBytes[baseBytes.size() - 1 - suffix] == newBytes[newBytes.size() - 1 - suffix])
        ++suffix;

    std::size_t deleteLen = baseBytes.size() - prefix - suffix;
    Bytes insert(newBytes.begin() + prefix, newBytes.end() - suffix);
    if (deleteLen == 0 && insert.empty())
        return doc; // identical inputs: empty edit script
    doc.records.push_back(DeltaRecord{prefix, deleteLen, std::move(insert)});
    return doc;
}

Bytes applyDelta(BytesView baseBytes, const DeltaDoc& delta, std::int64_t localBaseVersion)
{
    if (localBaseVersion != delta.baseVersion)
        fail(Errc::BaseMismatch, "delta base " + std::to_string(delta.baseVersion) +
                                     " vs local " + std::to_string(localBaseVersion));
    Bytes out;
    std::size_t cursor = 0;
    for (const auto& rec : delta.records) {
        if (rec.offset < cursor || rec.offset > baseBytes.size() ||
            rec.deleteLen > baseBytes.size() - rec.offset)
            fail(Errc::MalformedEncoding, "delta record out of range");
        out.insert(out.end(), baseBytes.begin() + cursor, baseBytes.begin() + rec.offset);
        out.insert(out.end(), rec.insert.begin(), rec.insert.end());
        cursor = rec.offset + rec.deleteLen;
    }
    out.insert(out.end(), baseBytes.begin() + cursor, baseBytes.end());
    return out;
}

} // namespace pcn
