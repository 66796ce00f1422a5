#include "pcn/router.hpp"
#include "pcn/crypto.hpp"

#include <algorithm>

namespace pcn {

void KeyStore::addKey(BytesView publicKey)
{
    keys_[crypto::sha256(publicKey)] = Bytes(publicKey.begin(), publicKey.end());
}

const Bytes* KeyStore::find(const Digest& keyHash) const
{
    auto it = keys_.find(keyHash);
    return it == keys_.end() ? nullptr : &it->second;
}

const char* rejectReasonName(RejectReason r)
{
    switch (r) {
    case RejectReason::BadSignature: return "BadSignature";
    case RejectReason::Expired: return "Expired";
    case RejectReason::Replayed: return "Replayed";
    case RejectReason::BadDelegation: return "BadDelegation";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// ContentStore

void ContentStore::touch(CacheMap::iterator it)
{
    cacheOrder_.erase(it->second.second);
    cacheOrder_.push_back(it->first);
    it->second.second = std::prev(cacheOrder_.end());
}

void ContentStore::cacheInsert(const DataPacket& packet, const Digest& signer)
{
    auto it = cache_.find(packet.name);
    if (it != cache_.end()) {
        it->second.first = Stored{packet, signer};
        touch(it);
        return;
    }
    cacheOrder_.push_back(packet.name);
    cache_[packet.name] = {Stored{packet, signer}, std::prev(cacheOrder_.end())};
    while (cacheOrder_.size() > cacheCapacity_) {
        cache_.erase(cacheOrder_.front());
        cacheOrder_.pop_front();
    }
}

void ContentStore::repoInsert(const DataPacket& packet, const Digest& signer)
{
    repo_[packet.name] = Stored{packet, signer};
}

void ContentStore::repoErase(const Name& name)
{
    repo_.erase(name);
}

const DataPacket* ContentStore::repoFind(const Name& name) const
{
    auto it = repo_.find(name);
    return it == repo_.end() ? nullptr : &it->second.packet;
}

std::optional<Name> ContentStore::bestVersion(const std::map<Name, Stored>& tier,
                                              const Name& base,
                                              std::optional<std::int64_t> minVersion) const
{
    // names sort by (principal, components, version, segment): all versions
    // of one base name are contiguous
    Name low = base.withoutVersion();
    auto it = tier.lower_bound(low);
    std::optional<Name> best;
    for (; it != tier.end(); ++it) {
        const Name& n = it->first;
        if (n.principal != base.principal || n.components != base.components)
            break;
        if (minVersion && n.version && *n.version < *minVersion)
            continue;
        if (!best || n.version > best->version)
            best = n;
    }
    return best;
}

std::optional<Name> ContentStore::bestCacheVersion(const Name& base,
                                                   std::optional<std::int64_t> minVersion) const
{
    std::optional<Name> best;
    for (const auto& [n, _] : cache_) {
        if (n.principal != base.principal || n.components != base.components)
            continue;
        if (minVersion && n.version && *n.version < *minVersion)
            continue;
        if (!best || n.version > best->version)
            best = n;
    }
    return best;
}

std::optional<ContentStore::Found> ContentStore::lookup(const Name& interestName,
                                                        std::optional<std::int64_t> minVersion)
{
    if (interestName.version) {
        if (minVersion && *interestName.version < *minVersion)
            return std::nullopt; // invalidated versions are never served
        auto cit = cache_.find(interestName);
        if (cit != cache_.end()) {
            touch(cit);
            return Found{cit->second.first.packet, true};
        }
        auto rit = repo_.find(interestName);
        if (rit != repo_.end())
            return Found{rit->second.packet, false};
        return std::nullopt;
    }
    // latest-version resolution: prefer the freshest admissible version, from
    // the cache when that tier holds it
    auto cacheBest = bestCacheVersion(interestName, minVersion);
    auto repoBest = bestVersion(repo_, interestName, minVersion);
    if (cacheBest && (!repoBest || !(cacheBest->version < repoBest->version))) {
        auto cit = cache_.find(*cacheBest);
        touch(cit);
        return Found{cit->second.first.packet, true};
    }
    if (repoBest)
        return Found{repo_.find(*repoBest)->second.packet, false};
    return std::nullopt;
}

int ContentStore::invalidateOlder(const Name& name, std::int64_t minVersion)
{
    int count = 0;
    for (auto it = cache_.begin(); it != cache_.end();) {
        const Name& n = it->first;
        if (n.principal == name.principal && n.components == name.components && n.version &&
            *n.version < minVersion) {
            cacheOrder_.erase(it->second.second);
            it = cache_.erase(it);
            ++count;
        } else {
            ++it;
        }
    }
    // repository copies stay on disk for history/delta bases but are counted
    // and filtered out of lookups by the version floor
    for (const auto& [n, _] : repo_)
        if (n.principal == name.principal && n.components == name.components && n.version &&
            *n.version < minVersion)
            ++count;
    return count;
}

void ContentStore::purgeBySigner(const Digest& keyHash)
{
    for (auto it = cache_.begin(); it != cache_.end();) {
        if (it->second.first.signer == keyHash) {
            cacheOrder_.erase(it->second.second);
            it = cache_.erase(it);
        } else {
            ++it;
        }
    }
    for (auto it = repo_.begin(); it != repo_.end();) {
        if (it->second.signer == keyHash)
            it = repo_.erase(it);
        else
            ++it;
    }
}

// ---------------------------------------------------------------------------
// Router

Router::Router(DeviceId self, KeyStore& keys, RouterConfig config)
    : self_(std::move(self)), keys_(keys), config_(config), store_(config.cacheCapacity),
      seenInterestNonces_(config.seenLruCapacity), seenAnnouncements_(config.seenLruCapacity)
{
}

std::optional<std::int64_t> Router::versionFloor(const Name& name) const
{
    auto it = versionFloor_.find(name.withoutVersion());
    return it == versionFloor_.end() ? std::nullopt : std::optional(it->second);
}

InterestAction Router::processInterest(const InterestPacket& interest, const DeviceId& fromFace,
                                       std::int64_t now)
{
    ++metrics_.interestsIn;
    InterestAction action;

    if (!seenInterestNonces_.insert(interest.nonce)) {
        ++metrics_.interestsDroppedDup;
        action.kind = InterestAction::Drop;
        action.dropReason = "duplicate nonce";
        return action;
    }

    if (auto found = store_.lookup(interest.name, versionFloor(interest.name))) {
        if (found->fromCache)
            ++metrics_.dataServedCache;
        else
            ++metrics_.dataServedRepo;
        action.kind = InterestAction::Serve;
        action.packet = std::move(found->packet);
        action.servedFromCache = found->fromCache;
        return action;
    }

    auto [pit, inserted] = pit_.try_emplace(interest.name);
    if (inserted) {
        pit->second.name = interest.name;
        pit->second.createdAt = now;
        pit->second.ttlMs = config_.pitTtlMs;
    }
    pit->second.incomingFaces.insert(fromFace);

    const FibEntry* entry = fib_.longestMatch(interest.name);
    if (entry == nullptr || entry->expiresAt <= now) {
        ++metrics_.interestsDroppedNoRoute;
        action.kind = InterestAction::Drop;
        action.dropReason = "no FIB match";
        return action;
    }
    std::vector<DeviceId> faces;
    for (const auto& f : entry->faces)
        if (f != fromFace)
            faces.push_back(f);
    if (faces.empty()) {
        ++metrics_.interestsDroppedNoRoute;
        action.kind = InterestAction::Drop;
        action.dropReason = "no usable face";
        return action;
    }
    if (!config_.forwardMulticast)
        faces.resize(1); // lowest face id: set iteration is ordered
    metrics_.interestsOut += faces.size();
    action.kind = InterestAction::Forward;
    action.faces = std::move(faces);
    return action;
}

std::optional<Digest> Router::verifyDataPacket(const DataPacket& packet, std::int64_t now) const
{
    Bytes message = dataSignedMessage(packet.name, packet.content);
    const Digest ownerHash = packet.name.principal.publicKeyHash;
    if (!keys_.isRevoked(ownerHash)) {
        if (const Bytes* ownerKey = keys_.find(ownerHash))
            if (crypto::verify(*ownerKey, message, packet.signature))
                return ownerHash;
    }
    if (packet.delegation) {
        const DelegationCert& cert = *packet.delegation;
        if (!isPrefixOf(cert.prefix, packet.name))
            return std::nullopt;
        if (keys_.isRevoked(cert.delegateKeyHash) || keys_.isRevoked(ownerHash))
            return std::nullopt;
        const Bytes* ownerKey = keys_.find(ownerHash);
        if (!ownerKey || !verifyDelegation(cert, *ownerKey, now))
            return std::nullopt;
        const Bytes* delegateKey = keys_.find(cert.delegateKeyHash);
        if (delegateKey && crypto::verify(*delegateKey, message, packet.signature))
            return cert.delegateKeyHash;
    }
    return std::nullopt;
}

DataResult Router::processData(const DataPacket& packet, const DeviceId& fromFace,
                               std::int64_t now)
{
    ++metrics_.dataIn;
    DataResult result;

    auto signer = verifyDataPacket(packet, now);
    if (!signer) {
        ++metrics_.dataDroppedBadSignature;
        return result;
    }
    if (auto floor = versionFloor(packet.name);
        floor && packet.name.version && *packet.name.version < *floor) {
        ++metrics_.dataDroppedStale;
        return result;
    }
    result.accepted = true;

    // reverse-path delivery: exact-version and latest-version interests both
    // match this packet
    std::set<DeviceId> deliver;
    for (const Name& key : {packet.name, packet.name.withoutVersion()}) {
        auto it = pit_.find(key);
        if (it == pit_.end())
            continue;
        for (const auto& f : it->second.incomingFaces)
            if (f != fromFace)
                deliver.insert(f);
        pit_.erase(it);
        if (!packet.name.version)
            break; // both keys identical
    }
    if (deliver.empty() && !config_.cacheUnsolicitedData)
        return result; // unsolicited: verified but dropped by default

    store_.cacheInsert(packet, *signer);
    result.cached = true;
    result.deliverTo = std::move(deliver);
    return result;
}

bool Router::delegationValid(const DelegationCert& cert, const Prefix& announced,
                             std::int64_t now) const
{
    if (keys_.isRevoked(cert.prefix.principal.publicKeyHash))
        return false;
    const Bytes* ownerKey = keys_.find(cert.prefix.principal.publicKeyHash);
    if (!ownerKey)
        return false;
    if (!verifyDelegation(cert, *ownerKey, now))
        return false;
    return isPrefixOf(cert.prefix, announced);
}

AnnouncementEffect Router::reject(RejectReason reason)
{
    ++metrics_.announcementsRejected[rejectReasonName(reason)];
    return AnnouncementEffect{AnnouncementEffect::Rejected, 0, reason};
}

AnnouncementEffect Router::processAnnouncement(const Announcement& ann, const DeviceId& fromFace,
                                               std::int64_t now)
{
    const Digest signerHash = ann.signerKeyHash();
    if (keys_.isRevoked(signerHash))
        return reject(RejectReason::BadSignature);
    const Bytes* signerKey = keys_.find(signerHash);
    if (!signerKey)
        return reject(RejectReason::BadSignature);
    if (!crypto::verify(*signerKey, announcementSignedMessage(ann), ann.signature))
        return reject(RejectReason::BadSignature);
    if (ann.delegation && !delegationValid(*ann.delegation, ann.prefix, now))
        return reject(RejectReason::BadDelegation);
    if (!ann.delegation && signerHash != ann.prefix.principal.publicKeyHash)
        return reject(RejectReason::BadSignature);
    if (now > ann.expiresAt)
        return reject(RejectReason::Expired);
    if (!seenAnnouncements_.insert({signerHash, ann.nonce}))
        return reject(RejectReason::Replayed);

    switch (ann.kind) {
    case AnnouncementKind::Regular: {
        if (ann.withdraw) {
            if (FibEntry* entry = fib_.find(ann.prefix)) {
                entry->faces.erase(fromFace);
                if (entry->faces.empty())
                    fib_.erase(ann.prefix);
            }
            ++metrics_.announcementsAccepted;
            return AnnouncementEffect{AnnouncementEffect::FibUpdated};
        }
        [[fallthrough]];
    }
    case AnnouncementKind::Modification: {
        FibEntry* entry = fib_.find(ann.prefix);
        if (entry == nullptr) {
            fib_.insert(ann.prefix, FibEntry{ann.prefix, {fromFace}, ann.signature, signerHash,
                                             ann.expiresAt});
        } else {
            entry->faces.insert(fromFace); // merge faces into one entry
            entry->originSignature = ann.signature;
            entry->originKeyHash = signerHash;
            entry->expiresAt = std::max(entry->expiresAt, ann.expiresAt);
        }
        ++metrics_.announcementsAccepted;
        if (ann.kind == AnnouncementKind::Regular)
            return AnnouncementEffect{AnnouncementEffect::FibUpdated};

        const ModificationInfo& mod = *ann.modification;
        Name base = mod.name.withoutVersion();
        auto [it, inserted] = versionFloor_.try_emplace(base, mod.version);
        if (!inserted)
            it->second = std::max(it->second, mod.version);
        int count = store_.invalidateOlder(mod.name, it->second);
        metrics_.cacheInvalidations += static_cast<std::uint64_t>(count);
        return AnnouncementEffect{AnnouncementEffect::CacheInvalidated, count};
    }
    case AnnouncementKind::Revocation: {
        // a suicide note: the revocation must be self-signed by the dying key
        if (!ann.revokedKeyHash || *ann.revokedKeyHash != signerHash)
            return reject(RejectReason::BadSignature);
        keys_.revoke(*ann.revokedKeyHash);
        fib_.eraseIf([&](const Prefix&, const FibEntry& e) {
            return e.originKeyHash == *ann.revokedKeyHash;
        });
        store_.purgeBySigner(*ann.revokedKeyHash);
        ++metrics_.announcementsAccepted;
        return AnnouncementEffect{AnnouncementEffect::KeyRevoked};
    }
    }
    return reject(RejectReason::BadSignature); // unreachable
}

Announcement Router::makeAnnouncement(AnnouncementKind kind, const Prefix& prefix,
                                      const KeyPair& signer, std::int64_t now, Rng& rng,
                                      std::optional<ModificationInfo> modification,
                                      std::optional<DelegationCert> delegation, bool withdraw,
                                      std::optional<Digest> revokedKeyHash)
{
    const Digest signerHash = signer.publicKeyHash();
    bool isOwner = signerHash == prefix.principal.publicKeyHash;
    bool isDelegate = delegation && delegation->delegateKeyHash == signerHash &&
                      isPrefixOf(delegation->prefix, prefix) && now <= delegation->expiresAt;
    if (!isOwner && !isDelegate)
        fail(Errc::NotAuthorized, render(prefix));

    Announcement ann;
    ann.kind = kind;
    ann.prefix = prefix;
    ann.withdraw = withdraw;
    ann.modification = std::move(modification);
    ann.revokedKeyHash = revokedKeyHash;
    ann.nonce = rng.nextU64();
    ann.expiresAt = now + config_.announcementLifetimeMs;
    if (!isOwner)
        ann.delegation = std::move(delegation);
    ann.signature = crypto::sign(signer.key, announcementSignedMessage(ann));
    return ann;
}

void Router::clearVolatile()
{
    fib_.clear();
    pit_.clear();
    store_.clearCache();
    seenInterestNonces_ = LruSet<std::uint64_t>(config_.seenLruCapacity);
    seenAnnouncements_ = LruSet<std::pair<Digest, std::uint64_t>>(config_.seenLruCapacity);
}

void Router::expirePit(std::int64_t now)
{
    for (auto it = pit_.begin(); it != pit_.end();) {
        if (now - it->second.createdAt >= it->second.ttlMs)
            it = pit_.erase(it);
        else
            ++it;
    }
}

std::size_t Router::fibByteSize(std::optional<std::size_t> accountingBytes) const
{
    std::size_t total = 0;
    fib_.forEach([&](const Prefix& p, const FibEntry& e) {
        if (accountingBytes) {
            total += *accountingBytes;
            return;
        }
        ByteWriter w;
        canonicalEncode(w, p);
        w.u16(static_cast<std::uint16_t>(e.faces.size()));
        for (const auto& f : e.faces)
            w.str16(f);
        w.blob16(e.originSignature);
        w.i64(e.expiresAt);
        total += w.size();
    });
    return total;
}

} // namespace pcn
