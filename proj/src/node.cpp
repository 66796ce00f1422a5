#include "pcn/node.hpp"

#include <algorithm>

namespace pcn {

// ---------------------------------------------------------------------------
// Device files

Bytes encodePrefixLog(const PrefixLog& log)
{
    ByteWriter w;
    w.u8(wire::kTagPrefixLog);
    w.u64(log.totalSeen);
    w.u32(static_cast<std::uint32_t>(log.entries.size()));
    for (const auto& e : log.entries)
        w.blob32(e);
    return w.take();
}

PrefixLog decodePrefixLog(BytesView bytes)
{
    ByteReader r(bytes);
    if (r.u8() != wire::kTagPrefixLog)
        fail(Errc::MalformedEncoding, "not a prefix log");
    PrefixLog log;
    log.totalSeen = r.u64();
    std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i)
        log.entries.push_back(r.blob32());
    r.expectEnd();
    return log;
}

Bytes encodeManifest(const std::vector<ManifestEntry>& entries)
{
    ByteWriter w;
    w.u8(wire::kTagManifest);
    w.u32(static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
        canonicalEncode(w, e.name);
        w.i64(e.version);
        encodeVv(w, e.vv);
    }
    return w.take();
}

std::vector<ManifestEntry> decodeManifest(BytesView bytes)
{
    ByteReader r(bytes);
    if (r.u8() != wire::kTagManifest)
        fail(Errc::MalformedEncoding, "not a manifest");
    std::uint32_t count = r.u32();
    std::vector<ManifestEntry> entries;
    for (std::uint32_t i = 0; i < count; ++i) {
        ManifestEntry e;
        e.name = canonicalDecode(r);
        e.version = r.i64();
        e.vv = decodeVv(r);
        entries.push_back(std::move(e));
    }
    r.expectEnd();
    return entries;
}

// ---------------------------------------------------------------------------
// Construction / wiring

namespace {

std::pair<std::string, std::string> splitDeviceId(const DeviceId& id)
{
    auto dot = id.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 == id.size())
        fail(Errc::UnknownNode, "device id must be <principal>.<device>: " + id);
    return {id.substr(0, dot), id.substr(dot + 1)};
}

Prefix parentPrefix(const Name& name)
{
    Prefix p{name.principal, name.components};
    if (!p.components.empty())
        p.components.pop_back();
    return p;
}

bool isEnvelopeContent(const Bytes& content)
{
    return !content.empty() && content[0] == wire::kTagEnvelope;
}

} // namespace

Node::Node(DeviceId id, std::string principalLabel, KeyPair principalKey, NodeEnv& env,
           NodeConfig config)
    : id_(std::move(id)), principalLabel_(std::move(principalLabel)),
      principalKey_(std::move(principalKey)), env_(env), config_(config), keys_(),
      router_(id_, keys_, config.router)
{
    auto [label, leaf] = splitDeviceId(id_);
    if (label != principalLabel_)
        fail(Errc::UnknownNode, "device id does not match principal label");
    deviceLeaf_ = leaf;
    principal_ = principalKey_.principal(principalLabel_);
    keys_.addKey(principalKey_.publicKey());
    peerPrincipals_[principalLabel_] = principalKey_.publicKeyHash();
}

Name Node::deviceName() const
{
    return Name{principal_, {"dev", deviceLeaf_}, std::nullopt, std::nullopt};
}

void Node::setPeers(std::vector<DeviceId> peers)
{
    peers_ = std::move(peers);
    std::sort(peers_.begin(), peers_.end());
    for (const auto& p : peers_)
        peerState_.try_emplace(p);
}

void Node::addKnownPrincipal(const std::string& label, BytesView publicKey)
{
    keys_.addKey(publicKey);
    peerPrincipals_[label] = crypto::sha256(publicKey);
}

void Node::installKeyring(AbeKeyring keyring)
{
    abePublicKeys_[keyring.owner.publicKeyHash] = keyring.publicKey;
    keyring_ = std::move(keyring);
}

void Node::installAbePublicKey(const AbePublicKey& pk)
{
    abePublicKeys_[pk.owner.publicKeyHash] = pk;
}

void Node::installAttributeKey(const AttributeSecretKey& sk)
{
    if (sk.scalars.empty())
        return;
    Digest owner = sk.scalars.begin()->first.authority.publicKeyHash;
    attributeKeys_[{owner, sk.epoch}] = sk;
}

void Node::installDelegation(DelegationCert cert)
{
    delegations_.push_back(std::move(cert));
}

void Node::restoreReplica(Replica replica)
{
    Name base = replica.name.withoutVersion();
    lastVersion_ = std::max(lastVersion_, replica.currentVersion);
    replicas_[base] = std::move(replica);
}

void Node::restorePrefixLog(PrefixLog log)
{
    prefixLog_ = std::move(log);
}

void Node::restoreClock(std::int64_t lastVersion)
{
    lastVersion_ = std::max(lastVersion_, lastVersion);
}

void Node::start()
{
    started_ = true;
    if (config_.announceDevicePrefix)
        announcePrefix(Prefix{principal_, {"dev", deviceLeaf_}});
    for (const auto& [name, rep] : replicas_)
        ensureParentAnnounced(name);
    env_.scheduleWake(id_, env_.now() + config_.housekeepingIntervalMs, kWakeHousekeeping);
    env_.scheduleWake(id_, env_.now() + config_.pingIntervalMs, kWakePing);
}

void Node::restart()
{
    router_.clearVolatile();
    pendingFetches_.clear();
    for (auto& [peer, state] : peerState_) {
        state.reachable = false;
        state.pongSeenThisRound = false;
    }
    std::set<Prefix> prefixes = std::exchange(announcedPrefixes_, {});
    for (const auto& p : prefixes)
        announcePrefix(p); // fresh nonces
    for (const auto& p : peers_) {
        PingFrame ping{env_.rng().nextU64()};
        env_.sendFrame(id_, p, encodePing(ping, false));
    }
    env_.scheduleWake(id_, env_.now() + config_.housekeepingIntervalMs, kWakeHousekeeping);
    env_.scheduleWake(id_, env_.now() + config_.pingIntervalMs, kWakePing);
}

std::vector<DeviceId> Node::reachablePeers() const
{
    std::vector<DeviceId> out;
    for (const auto& p : peers_) {
        auto it = peerState_.find(p);
        if (it != peerState_.end() && it->second.reachable)
            out.push_back(p);
    }
    return out;
}

bool Node::hasPendingWork() const
{
    if (!pendingFetches_.empty())
        return true;
    for (const auto& [name, rep] : replicas_)
        if (rep.state == ReplicaState::Dirty)
            return true;
    return false;
}

const Replica* Node::findReplica(const Name& name) const
{
    auto it = replicas_.find(name.withoutVersion());
    return it == replicas_.end() ? nullptr : &it->second;
}

std::int64_t Node::monotonize(std::int64_t now)
{
    lastVersion_ = std::max(lastVersion_ + 1, now);
    return lastVersion_;
}

// ---------------------------------------------------------------------------
// Event loop

void Node::onWake(std::uint64_t token)
{
    const std::int64_t now = env_.now();
    if (token == kWakeHousekeeping) {
        router_.expirePit(now);
        std::vector<Name> exhausted;
        for (auto& [key, fetch] : pendingFetches_) {
            if (fetch.nextRetryAt > now)
                continue;
            if (fetch.retriesLeft == 0) {
                exhausted.push_back(key);
                continue;
            }
            if (fetch.retriesLeft > 0)
                --fetch.retriesLeft;
            fireInterest(fetch);
        }
        for (const auto& k : exhausted)
            pendingFetches_.erase(k);
        env_.scheduleWake(id_, now + config_.housekeepingIntervalMs, kWakeHousekeeping);
        return;
    }
    if (token == kWakePing) {
        for (auto& [peer, state] : peerState_) {
            if (!state.pongSeenThisRound)
                state.reachable = false;
            state.pongSeenThisRound = false;
            PingFrame ping{env_.rng().nextU64()};
            env_.sendFrame(id_, peer, encodePing(ping, false));
        }
        env_.scheduleWake(id_, now + config_.pingIntervalMs, kWakePing);
        return;
    }
}

void Node::onFrame(const DeviceId& from, BytesView frame)
{
    switch (frameTag(frame)) {
    case wire::kTagInterest:
        handleInterest(decodeInterest(frame), from);
        return;
    case wire::kTagData:
        handleData(decodeData(frame), from);
        return;
    case wire::kTagAnnouncement:
        handleAnnouncement(decodeAnnouncement(frame), from);
        return;
    case wire::kTagPing:
        handlePing(frame, from, false);
        return;
    case wire::kTagPong:
        handlePing(frame, from, true);
        return;
    default:
        fail(Errc::MalformedEncoding, "unknown frame tag");
    }
}

void Node::handlePing(BytesView frame, const DeviceId& from, bool pong)
{
    ByteReader r(frame);
    r.u8();
    PingFrame p{r.u64()};
    if (!pong) {
        env_.sendFrame(id_, from, encodePing(p, true));
        return;
    }
    auto it = peerState_.find(from);
    if (it == peerState_.end())
        return;
    it->second.pongSeenThisRound = true;
    if (!it->second.reachable) {
        it->second.reachable = true;
        // the peer came (back) into view: pull its received_prefix log
        PendingFetch fetch;
        fetch.purpose = FetchPurpose::PrefixLog;
        fetch.retriesLeft = config_.logFetchRetries;
        fetch.sourcePeer = from;
        expressInterest(std::move(fetch));
    }
}

void Node::handleInterest(const InterestPacket& interest, const DeviceId& from)
{
    // reserved device files are materialized on demand
    Name base = interest.name.withoutVersion();
    if (base == deviceName().child("received_prefix"))
        republishDeviceFile("received_prefix", encodePrefixLog(prefixLog_));
    else if (base == deviceName().child("manifest"))
        refreshManifest();
    InterestAction action = router_.processInterest(interest, from, env_.now());
    serveLocal(interest, from, action);
}

void Node::serveLocal(const InterestPacket& interest, const DeviceId& from,
                      const InterestAction& action)
{
    switch (action.kind) {
    case InterestAction::Serve: {
        const DataPacket& packet = *action.packet;
        env_.traceServe(id_, packet.name, packet.name.version.value_or(0),
                        action.servedFromCache);
        if (from != id_)
            env_.sendFrame(id_, from, encodeData(packet));
        else
            completeFetches(packet);
        return;
    }
    case InterestAction::Forward:
        for (const auto& face : action.faces)
            env_.sendFrame(id_, face, encodeInterest(interest));
        return;
    case InterestAction::Drop:
        return;
    }
}

void Node::handleData(const DataPacket& packet, const DeviceId& from)
{
    DataResult result = router_.processData(packet, from, env_.now());
    if (!result.accepted)
        return;
    Bytes encoded;
    for (const auto& face : result.deliverTo) {
        if (face == id_)
            continue;
        if (encoded.empty())
            encoded = encodeData(packet);
        env_.sendFrame(id_, face, encoded);
    }
    if (result.deliverTo.count(id_))
        completeFetches(packet);
}

void Node::handleAnnouncement(const Announcement& ann, const DeviceId& from)
{
    AnnouncementEffect effect = router_.processAnnouncement(ann, from, env_.now());
    if (!effect.accepted())
        return;
    appendPrefixLog(ann);
    if (ann.kind == AnnouncementKind::Regular) {
        if (ann.withdraw)
            prefixHolders_[ann.prefix].erase(from);
        else
            prefixHolders_[ann.prefix].insert(from);
    } else if (ann.kind == AnnouncementKind::Modification) {
        prefixHolders_[ann.prefix].insert(from);
        const ModificationInfo& mod = *ann.modification;
        env_.traceModification(id_, mod.name.withoutVersion(), mod.version);
        reactToModification(mod, from);
    }
}

// ---------------------------------------------------------------------------
// Announcements out

void Node::announceCore(const Announcement& ann)
{
    appendPrefixLog(ann); // own announcements are logged: rejoining neighbors
                          // learn our prefixes from our log
    prefixHolders_[ann.prefix].insert(id_);
    Bytes encoded = encodeAnnouncement(ann);
    for (const auto& peer : peers_)
        env_.sendFrame(id_, peer, encoded);
}

void Node::announcePrefix(const Prefix& prefix)
{
    announcedPrefixes_.insert(prefix);
    std::optional<DelegationCert> delegation;
    if (!(prefix.principal == principal_))
        delegation = delegationCovering(prefix.asName());
    Announcement ann = router_.makeAnnouncement(AnnouncementKind::Regular, prefix, principalKey_,
                                                env_.now(), env_.rng(), std::nullopt, delegation);
    announceCore(ann);
}

void Node::ensureParentAnnounced(const Name& name)
{
    Prefix prefix = parentPrefix(name);
    if (announcedPrefixes_.count(prefix))
        return;
    announcePrefix(prefix);
}

void Node::appendPrefixLog(const Announcement& ann)
{
    prefixLog_.entries.push_back(encodeAnnouncement(ann));
    ++prefixLog_.totalSeen;
    while (prefixLog_.entries.size() > config_.prefixLogCapacity)
        prefixLog_.entries.pop_front();
    // the served packet is rebuilt lazily when an interest arrives
}

void Node::republishDeviceFile(const std::string& leaf, Bytes content)
{
    Name name = deviceName().child(leaf);
    if (auto meta = lastKnownMeta_.find(name); meta != lastKnownMeta_.end())
        router_.store().repoErase(name.withVersion(meta->second.version));
    std::int64_t version = monotonize(env_.now());
    DataPacket packet =
        makeDataPacket(principalKey_, name.withVersion(version), std::move(content));
    router_.store().repoInsert(packet, principalKey_.publicKeyHash());
    ModificationInfo meta;
    meta.name = name;
    meta.version = version;
    lastKnownMeta_[name] = std::move(meta);
}

void Node::refreshManifest()
{
    std::vector<ManifestEntry> entries;
    for (const auto& [name, rep] : replicas_)
        entries.push_back(ManifestEntry{name, rep.currentVersion, rep.vv});
    republishDeviceFile("manifest", encodeManifest(entries));
}

// ---------------------------------------------------------------------------
// Publication

std::optional<DelegationCert> Node::delegationCovering(const Name& name) const
{
    const std::int64_t now = env_.now();
    for (const auto& cert : delegations_)
        if (cert.delegateKeyHash == principalKey_.publicKeyHash() &&
            isPrefixOf(cert.prefix, name) && now <= cert.expiresAt)
            return cert;
    return std::nullopt;
}

void Node::publishPacket(const Name& versionedName, Bytes content, bool announceModification,
                         const VersionVector& vv, std::optional<Name> deltaLink)
{
    bool own = versionedName.principal == principal_;
    std::optional<DelegationCert> delegation;
    if (!own) {
        delegation = delegationCovering(versionedName);
        if (!delegation)
            fail(Errc::NotAuthorized, render(versionedName));
    }
    DataPacket packet =
        makeDataPacket(principalKey_, versionedName, std::move(content), delegation);
    router_.store().repoInsert(packet, principalKey_.publicKeyHash());
    ensureParentAnnounced(versionedName);
    if (!announceModification)
        return;
    ModificationInfo mod;
    mod.name = versionedName.withoutVersion();
    mod.version = versionedName.version.value_or(0);
    mod.vv = vv;
    mod.deltaLink = std::move(deltaLink);
    lastKnownMeta_[mod.name] = mod;
    Announcement ann =
        router_.makeAnnouncement(AnnouncementKind::Modification, parentPrefix(versionedName),
                                 principalKey_, env_.now(), env_.rng(), mod, delegation);
    announceCore(ann);
}

Name Node::publish(const Name& name, BytesView content, const PolicyTree& readPolicy,
                   const PolicyTree& writePolicy)
{
    if (!(name.principal == principal_))
        fail(Errc::NotOwner, "publish into a foreign namespace");
    if (!keyring_ || !keyring_->hasMaster())
        fail(Errc::MissingMasterKey, "publishing device holds no keyring");
    Name base = name.withoutVersion();
    std::int64_t version = monotonize(env_.now());

    SecureEnvelope env = envelopeEncrypt(keyring_->publicKey, content, readPolicy, writePolicy,
                                         principalKey_, env_.rng());
    Bytes wireBytes = encodeEnvelope(env);

    Replica rep;
    rep.name = base;
    rep.currentVersion = version;
    rep.vv.bump(id_);
    rep.envelopeWire = wireBytes;
    rep.history.push_back(RevisionRecord{principalKey_.publicKeyHash(), env_.now(), version,
                                         crypto::sha256(wireBytes)});
    VersionVector vv = rep.vv;
    replicas_[base] = std::move(rep);

    publishPacket(base.withVersion(version), std::move(wireBytes), true, vv, std::nullopt);
    updateDirectoriesFor(base);
    refreshManifest();
    return base.withVersion(version);
}

Name Node::update(const Name& name, BytesView content)
{
    Name base = name.withoutVersion();
    auto it = replicas_.find(base);
    if (it == replicas_.end())
        fail(Errc::FetchFailed, "no local replica of " + render(base));
    Replica& rep = it->second;
    SecureEnvelope env = decodeEnvelope(rep.envelopeWire);
    std::int64_t newVersion = monotonize(env_.now());

    SecureEnvelope next;
    bool own = base.principal == principal_;
    if (own && keyring_ && keyring_->hasMaster()) {
        next = envelopeUpdateAsOwner(env, content, *keyring_, base, newVersion, env_.rng());
    } else {
        auto pkIt = abePublicKeys_.find(base.principal.publicKeyHash);
        if (pkIt == abePublicKeys_.end())
            fail(Errc::WriteNotVerified, "no ABE public key for the owner");
        auto skIt = attributeKeys_.find({base.principal.publicKeyHash, env.epoch});
        if (skIt == attributeKeys_.end())
            fail(Errc::PolicyNotSatisfied, "no attribute key for epoch " +
                                               std::to_string(env.epoch));
        next = envelopeUpdate(env, content, skIt->second, pkIt->second, base, newVersion,
                              env_.rng());
    }

    Bytes wireBytes = encodeEnvelope(next);
    std::optional<Name> deltaLink;
    if (config_.emitDeltas) {
        Name deltaName =
            base.child("_delta_" + std::to_string(newVersion)).withVersion(newVersion);
        bool deltaAuthorized = base.principal == principal_ || delegationCovering(deltaName);
        if (deltaAuthorized) {
            DeltaDoc delta = makeDelta(rep.envelopeWire, wireBytes, rep.currentVersion);
            std::optional<DelegationCert> deltaDelegation;
            if (!(base.principal == principal_))
                deltaDelegation = delegationCovering(deltaName);
            DataPacket deltaPacket = makeDataPacket(principalKey_, deltaName, encodeDelta(delta),
                                                    deltaDelegation);
            router_.store().repoInsert(deltaPacket, principalKey_.publicKeyHash());
            deltaLink = deltaName;
        }
    }

    rep.vv.bump(id_);
    rep.currentVersion = newVersion;
    rep.envelopeWire = wireBytes;
    rep.history.push_back(RevisionRecord{principalKey_.publicKeyHash(), env_.now(), newVersion,
                                         crypto::sha256(wireBytes)});
    publishPacket(base.withVersion(newVersion), std::move(wireBytes), true, rep.vv, deltaLink);
    refreshManifest();
    return base.withVersion(newVersion);
}

void Node::updateDirectoriesFor(const Name& name, bool removeEntry)
{
    for (std::size_t depth = name.components.size(); depth > 0; --depth) {
        Name dirName{name.principal,
                     {name.components.begin(),
                      name.components.begin() + static_cast<std::ptrdiff_t>(depth - 1)},
                     std::nullopt, std::nullopt};
        const std::string& component = name.components[depth - 1];
        Name target{name.principal,
                    {name.components.begin(),
                     name.components.begin() + static_cast<std::ptrdiff_t>(depth)},
                    std::nullopt, std::nullopt};

        DirectoryDoc doc;
        auto it = replicas_.find(dirName);
        if (it != replicas_.end()) {
            std::string error;
            auto plain = decryptEnvelope(decodeEnvelope(it->second.envelopeWire), &error);
            if (!plain || !looksLikeDirectory(*plain))
                return;
            doc = decodeDirectory(*plain);
        }
        bool changed = false;
        auto entry = doc.entries.find(component);
        if (removeEntry && depth == name.components.size()) {
            if (entry != doc.entries.end() && !entry->second.tombstone) {
                doc.remove(component, id_);
                changed = true;
            }
        } else if (entry == doc.entries.end() || entry->second.tombstone ||
                   !(entry->second.target == target)) {
            doc.put(component, target, id_);
            changed = true;
        }
        if (!changed)
            return; // the rest of the chain is already linked
        writeDirectoryReplica(dirName, doc, std::nullopt);
    }
}

void Node::writeDirectoryReplica(const Name& dirName, const DirectoryDoc& doc,
                                 std::optional<VersionVector> explicitVv)
{
    if (!keyring_ || !keyring_->hasMaster())
        return; // only owner devices maintain directory documents
    Bytes plain = encodeDirectory(doc);
    std::int64_t version = monotonize(env_.now());
    auto it = replicas_.find(dirName);
    SecureEnvelope env;
    if (it != replicas_.end()) {
        env = envelopeUpdateAsOwner(decodeEnvelope(it->second.envelopeWire), plain, *keyring_,
                                    dirName, version, env_.rng());
    } else {
        env = envelopeEncrypt(keyring_->publicKey, plain, ownerOnlyPolicy(principal_),
                              ownerOnlyPolicy(principal_), principalKey_, env_.rng());
        it = replicas_.emplace(dirName, Replica{}).first;
        it->second.name = dirName;
    }
    Replica& rep = it->second;
    rep.envelopeWire = encodeEnvelope(env);
    rep.currentVersion = version;
    if (explicitVv)
        rep.vv = *explicitVv;
    else
        rep.vv.bump(id_);
    rep.state = ReplicaState::Clean;
    rep.alternatives.clear();
    rep.history.push_back(RevisionRecord{principalKey_.publicKeyHash(), env_.now(), version,
                                         crypto::sha256(rep.envelopeWire)});
    publishPacket(dirName.withVersion(version), rep.envelopeWire, true, rep.vv, std::nullopt);
    refreshManifest();
}

// ---------------------------------------------------------------------------
// Key / access operations

AttributeSecretKey Node::issueAttributeKey(const AttributeSet& attrs, const Principal& holder)
{
    if (!keyring_ || !keyring_->hasMaster())
        fail(Errc::MissingMasterKey, "attribute issuance requires the master key");
    for (const auto& a : attrs)
        if (!keyring_->publicKey.attributePoints.count(a))
            abeDefineAttribute(*keyring_, a);
    abePublicKeys_[keyring_->owner.publicKeyHash] = keyring_->publicKey;
    return abeKeygen(*keyring_, attrs, holder);
}

void Node::rekey()
{
    if (!keyring_ || !keyring_->hasMaster())
        fail(Errc::MissingMasterKey, "rekey requires the master key");
    *keyring_ = rekeyLazy(*keyring_);
    abePublicKeys_[keyring_->owner.publicKeyHash] = keyring_->publicKey;
}

void Node::revokeIdentity()
{
    Announcement ann = router_.makeAnnouncement(
        AnnouncementKind::Revocation, Prefix{principal_, {}}, principalKey_, env_.now(),
        env_.rng(), std::nullopt, std::nullopt, false, principalKey_.publicKeyHash());
    announceCore(ann);
}

void Node::issueCommand(const Name& targetDevice, CommandOp op, const Name& target)
{
    Name cmdName = targetDevice.child(".cmd");
    CommandFile file;
    auto it = replicas_.find(cmdName);
    if (it != replicas_.end()) {
        std::string error;
        auto plain = decryptEnvelope(decodeEnvelope(it->second.envelopeWire), &error);
        if (plain)
            file = decodeCommandFile(*plain);
    }
    file = appendCommand(file, principalKey_, targetDevice, op, target, env_.now(),
                         config_.commandExpiryMs);
    Bytes content = encodeCommandFile(file);
    if (it != replicas_.end())
        update(cmdName, content);
    else
        publish(cmdName, content, ownerOnlyPolicy(principal_), ownerOnlyPolicy(principal_));
}

void Node::executeCommandFile(const CommandFile& file)
{
    if (!verifyCommandFile(file, principalKey_.publicKey()))
        return; // whole file ignored
    std::vector<Command> skipped;
    for (const Command& c : freshCommandsInOrder(file, env_.now(), &skipped)) {
        Digest h = commandHash(c);
        if (!executedCommands_.insert(h).second)
            continue; // repeat execution is a no-op
        switch (c.op) {
        case CommandOp::Replicate:
            replicate(c.target);
            break;
        case CommandOp::Unreplicate: {
            Name base = c.target.withoutVersion();
            auto rit = replicas_.find(base);
            if (rit == replicas_.end())
                break;
            router_.store().repoErase(base.withVersion(rit->second.currentVersion));
            replicas_.erase(rit);
            refreshManifest();
            Prefix prefix = parentPrefix(base);
            bool stillNeeded = false;
            for (const auto& [other, _] : replicas_)
                if (isPrefixOf(prefix, other))
                    stillNeeded = true;
            if (!stillNeeded && announcedPrefixes_.erase(prefix)) {
                Announcement ann = router_.makeAnnouncement(
                    AnnouncementKind::Regular, prefix, principalKey_, env_.now(), env_.rng(),
                    std::nullopt, std::nullopt, /*withdraw=*/true);
                announceCore(ann);
            }
            break;
        }
        case CommandOp::Rekey:
            if (keyring_ && keyring_->hasMaster())
                rekey();
            break;
        }
    }
}

// ---------------------------------------------------------------------------
// Reads

std::optional<Bytes> Node::decryptEnvelope(const SecureEnvelope& env, std::string* error) const
{
    if (keyring_ && keyring_->hasMaster()) {
        bool ownPolicy = true;
        for (const auto& a : env.readPolicy.leaves())
            if (!(a.authority == principal_))
                ownPolicy = false;
        if (ownPolicy) {
            try {
                return envelopeDecryptAsOwner(env, *keyring_);
            } catch (const Error& e) {
                if (error)
                    *error = e.what();
            }
        }
    }
    std::string lastError = "policy not satisfied";
    for (const auto& [key, sk] : attributeKeys_) {
        auto pkIt = abePublicKeys_.find(key.first);
        if (pkIt == abePublicKeys_.end())
            continue;
        try {
            return envelopeDecrypt(env, sk, pkIt->second);
        } catch (const Error& e) {
            if (e.code() == Errc::EpochMismatch)
                lastError = "epoch mismatch";
            else if (e.code() == Errc::IntegrityFailure)
                lastError = "integrity failure";
        }
    }
    if (error)
        *error = lastError;
    return std::nullopt;
}

bool Node::canWrite(const SecureEnvelope& env) const
{
    if (keyring_ && keyring_->hasMaster()) {
        bool ownPolicy = true;
        for (const auto& a : env.writePolicy.leaves())
            if (!(a.authority == principal_))
                ownPolicy = false;
        if (ownPolicy)
            return true;
    }
    for (const auto& [key, sk] : attributeKeys_)
        if (sk.epoch == env.epoch && policySatisfied(env.writePolicy, sk.attributes()))
            return true;
    return false;
}

std::optional<Bytes> Node::getLocal(const Name& name, std::string* error)
{
    auto found = router_.store().lookup(name, router_.versionFloor(name));
    if (!found) {
        if (error)
            *error = "not found";
        return std::nullopt;
    }
    if (!isEnvelopeContent(found->packet.content))
        return found->packet.content;
    return decryptEnvelope(decodeEnvelope(found->packet.content), error);
}

void Node::requestGet(const Name& name)
{
    PendingFetch fetch;
    fetch.interestName = name;
    fetch.purpose = FetchPurpose::UserGet;
    expressInterest(std::move(fetch));
}

void Node::replicate(const Name& name)
{
    Name base = name.withoutVersion();
    if (replicas_.count(base))
        return; // idempotent
    PendingFetch fetch;
    fetch.interestName = base; // latest version
    fetch.purpose = FetchPurpose::ReplicateAdd;
    auto metaIt = lastKnownMeta_.find(base);
    if (metaIt != lastKnownMeta_.end())
        fetch.modification = metaIt->second;
    fetch.replicateRoot = base;
    expressInterest(std::move(fetch));
}

void Node::resolveConflict(const Name& name, std::optional<std::size_t> alternativeIndex)
{
    Name base = name.withoutVersion();
    auto it = replicas_.find(base);
    if (it == replicas_.end() || it->second.state != ReplicaState::Conflicted)
        fail(Errc::FetchFailed, "no conflicted replica of " + render(base));
    Replica& rep = it->second;

    Bytes chosenWire = rep.envelopeWire;
    if (alternativeIndex) {
        if (*alternativeIndex >= rep.alternatives.size())
            fail(Errc::FetchFailed, "alternative index out of range");
        chosenWire = rep.alternatives[*alternativeIndex].envelopeWire;
    }
    std::string error;
    auto plain = decryptEnvelope(decodeEnvelope(chosenWire), &error);
    if (!plain)
        fail(Errc::PolicyNotSatisfied, error);

    VersionVector joined = rep.vv;
    for (const auto& alt : rep.alternatives)
        joined = VersionVector::join(joined, alt.vv);
    rep.vv = joined;
    rep.alternatives.clear();
    rep.state = ReplicaState::Clean;
    // a resolution is an ordinary update on top of the joined history
    update(base, *plain);
}

// ---------------------------------------------------------------------------
// Synchronization

void Node::reactToModification(const ModificationInfo& mod, const DeviceId& from)
{
    Name base = mod.name.withoutVersion();
    lastKnownMeta_[base] = mod;

    auto it = replicas_.find(base);
    if (it == replicas_.end()) {
        if (base == deviceName().child(".cmd")) {
            // our command file: implicitly replicated
            Replica placeholder;
            placeholder.name = base;
            it = replicas_.emplace(base, std::move(placeholder)).first;
        } else {
            return; // not replicated here
        }
    }
    Replica& rep = it->second;

    switch (VersionVector::compare(mod.vv, rep.vv)) {
    case VvOrder::DominatedBy:
        return; // AlreadyCurrent
    case VvOrder::Equal:
        if (mod.version < rep.currentVersion)
            return;
        if (mod.version == rep.currentVersion && from == id_)
            return;
        break; // convergence tie-break: fetch and compare
    case VvOrder::Dominates:
        break;
    case VvOrder::Concurrent: {
        PendingFetch fetch;
        fetch.interestName = base.withVersion(mod.version);
        fetch.purpose = FetchPurpose::ConflictCopy;
        fetch.modification = mod;
        rep.state = rep.state == ReplicaState::Conflicted ? ReplicaState::Conflicted
                                                          : ReplicaState::Dirty;
        expressInterest(std::move(fetch));
        return;
    }
    }

    rep.state = ReplicaState::Dirty;
    PendingFetch fetch;
    fetch.modification = mod;
    // deltas are only useful when we can re-sign the reconstructed packet
    bool canRepublish = base.principal == principal_ || delegationCovering(base).has_value();
    if (mod.deltaLink && canRepublish &&
        VersionVector::compare(mod.vv, rep.vv) == VvOrder::Dominates) {
        fetch.interestName = *mod.deltaLink;
        fetch.purpose = FetchPurpose::SyncDelta;
    } else {
        fetch.interestName = base.withVersion(mod.version);
        fetch.purpose = FetchPurpose::SyncUpdate;
    }
    expressInterest(std::move(fetch));
}

bool Node::verifyIncomingEnvelope(const DataPacket& packet, const SecureEnvelope& env,
                                  std::int64_t version) const
{
    Name base = packet.name.withoutVersion();
    if (env.hasWriteSignature())
        return verifyWrite(env, base, version);
    // owner-original publication: the packet itself must be owner-signed
    auto signer = router_.verifyDataPacket(packet, env_.now());
    return signer && *signer == base.principal.publicKeyHash;
}

void Node::applyFetchedUpdate(const PendingFetch& fetch, const DataPacket& packet)
{
    Name base = packet.name.withoutVersion();
    auto it = replicas_.find(base);
    if (it == replicas_.end())
        return;
    Replica& rep = it->second;
    std::int64_t version = packet.name.version.value_or(0);

    if (!isEnvelopeContent(packet.content)) {
        rep.state = ReplicaState::Clean;
        return;
    }
    SecureEnvelope env = decodeEnvelope(packet.content);
    if (!verifyIncomingEnvelope(packet, env, version)) {
        ++writeRejections_;
        rep.state = ReplicaState::Clean; // reject the update, keep ours
        return;
    }

    VersionVector remoteVv;
    if (fetch.modification)
        remoteVv = fetch.modification->vv;
    switch (VersionVector::compare(remoteVv, rep.vv)) {
    case VvOrder::Dominates: {
        rep.envelopeWire = packet.content;
        rep.vv = remoteVv;
        rep.currentVersion = version;
        rep.state = ReplicaState::Clean;
        rep.alternatives.clear();
        auto signer = router_.verifyDataPacket(packet, env_.now());
        rep.history.push_back(RevisionRecord{signer.value_or(Digest{}), env_.now(), version,
                                             crypto::sha256(packet.content)});
        router_.store().repoInsert(packet, signer.value_or(Digest{}));
        refreshManifest();
        if (base == deviceName().child(".cmd")) {
            std::string error;
            if (auto plain = decryptEnvelope(env, &error))
                executeCommandFile(decodeCommandFile(*plain));
        }
        return;
    }
    case VvOrder::Equal: {
        // identical history, different serialization: adopt the larger hash
        Digest ours = crypto::sha256(rep.envelopeWire);
        Digest theirs = crypto::sha256(packet.content);
        if (theirs > ours && version >= rep.currentVersion) {
            rep.envelopeWire = packet.content;
            rep.currentVersion = version;
            auto signer = router_.verifyDataPacket(packet, env_.now());
            router_.store().repoInsert(packet, signer.value_or(Digest{}));
            refreshManifest();
        }
        rep.state = rep.alternatives.empty() ? ReplicaState::Clean : rep.state;
        if (rep.state == ReplicaState::Dirty)
            rep.state = ReplicaState::Clean;
        return;
    }
    case VvOrder::DominatedBy:
        if (rep.state == ReplicaState::Dirty)
            rep.state = ReplicaState::Clean;
        return;
    case VvOrder::Concurrent:
        applyConflictCopy(fetch, packet);
        return;
    }
}

bool Node::tryDirectoryMerge(Replica& rep, const ModificationInfo& mod,
                             const DataPacket& remotePacket)
{
    SecureEnvelope localEnv = decodeEnvelope(rep.envelopeWire);
    SecureEnvelope remoteEnv = decodeEnvelope(remotePacket.content);
    std::string error;
    auto localPlain = decryptEnvelope(localEnv, &error);
    auto remotePlain = decryptEnvelope(remoteEnv, &error);
    if (!localPlain || !remotePlain)
        return false;
    if (!looksLikeDirectory(*localPlain) || !looksLikeDirectory(*remotePlain))
        return false;
    if (!canWrite(localEnv))
        return false;
    bool own = rep.name.principal == principal_;
    if (!own && !delegationCovering(rep.name))
        return false; // cannot republish the merged document

    auto [merged, conflicts] =
        mergeDirectory(decodeDirectory(*localPlain), decodeDirectory(*remotePlain));
    for (const auto& c : conflicts)
        dirConflicts_.push_back(DirConflictRecord{rep.name, c});

    VersionVector joined = VersionVector::join(rep.vv, mod.vv);
    if (own && keyring_ && keyring_->hasMaster()) {
        writeDirectoryReplica(rep.name, merged, joined);
    } else {
        Bytes plain = encodeDirectory(merged);
        std::int64_t version = monotonize(env_.now());
        auto pkIt = abePublicKeys_.find(rep.name.principal.publicKeyHash);
        auto skIt = attributeKeys_.find({rep.name.principal.publicKeyHash, localEnv.epoch});
        if (pkIt == abePublicKeys_.end() || skIt == attributeKeys_.end())
            return false;
        SecureEnvelope next = envelopeUpdate(localEnv, plain, skIt->second, pkIt->second,
                                             rep.name, version, env_.rng());
        rep.envelopeWire = encodeEnvelope(next);
        rep.currentVersion = version;
        rep.vv = joined;
        rep.state = ReplicaState::Clean;
        rep.history.push_back(RevisionRecord{principalKey_.publicKeyHash(), env_.now(), version,
                                             crypto::sha256(rep.envelopeWire)});
        publishPacket(rep.name.withVersion(version), rep.envelopeWire, true, rep.vv,
                      std::nullopt);
        refreshManifest();
    }
    return true;
}

void Node::applyConflictCopy(const PendingFetch& fetch, const DataPacket& packet)
{
    Name base = packet.name.withoutVersion();
    auto it = replicas_.find(base);
    if (it == replicas_.end() || !fetch.modification)
        return;
    Replica& rep = it->second;
    const ModificationInfo& mod = *fetch.modification;
    std::int64_t version = packet.name.version.value_or(0);

    if (!isEnvelopeContent(packet.content))
        return;
    SecureEnvelope env = decodeEnvelope(packet.content);
    if (!verifyIncomingEnvelope(packet, env, version)) {
        ++writeRejections_;
        if (rep.state == ReplicaState::Dirty)
            rep.state = ReplicaState::Clean;
        return;
    }

    switch (VersionVector::compare(mod.vv, rep.vv)) {
    case VvOrder::Dominates:
        applyFetchedUpdate(fetch, packet);
        return;
    case VvOrder::DominatedBy:
    case VvOrder::Equal:
        if (rep.state == ReplicaState::Dirty)
            rep.state = ReplicaState::Clean;
        return;
    case VvOrder::Concurrent:
        break;
    }

    if (rep.state != ReplicaState::Conflicted && tryDirectoryMerge(rep, mod, packet))
        return;

    // opaque conflict: keep ours, preserve theirs, let the user decide
    rep.state = ReplicaState::Conflicted;
    bool known = false;
    Digest theirHash = crypto::sha256(packet.content);
    for (const auto& alt : rep.alternatives)
        if (crypto::sha256(alt.envelopeWire) == theirHash)
            known = true;
    if (!known) {
        rep.alternatives.push_back(ConflictAlternative{version, mod.vv, packet.content});
        auto signer = router_.verifyDataPacket(packet, env_.now());
        rep.history.push_back(
            RevisionRecord{signer.value_or(Digest{}), env_.now(), version, theirHash});
    }
    refreshManifest();
}

void Node::adoptReplica(const DataPacket& packet, std::optional<ModificationInfo> meta,
                        std::optional<Name> replicateRoot)
{
    Name base = packet.name.withoutVersion();
    if (replicas_.count(base))
        return;
    std::int64_t version = packet.name.version.value_or(0);
    bool envelope = isEnvelopeContent(packet.content);
    if (envelope) {
        SecureEnvelope env = decodeEnvelope(packet.content);
        if (!verifyIncomingEnvelope(packet, env, version)) {
            ++writeRejections_;
            return;
        }
    }

    Replica rep;
    rep.name = base;
    rep.currentVersion = version;
    if (meta && meta->version == version)
        rep.vv = meta->vv;
    rep.envelopeWire = packet.content;
    auto signer = router_.verifyDataPacket(packet, env_.now());
    rep.history.push_back(RevisionRecord{signer.value_or(Digest{}), env_.now(), version,
                                         crypto::sha256(packet.content)});
    replicas_[base] = std::move(rep);
    router_.store().repoInsert(packet, signer.value_or(Digest{}));
    ensureParentAnnounced(base);
    refreshManifest();

    if (!envelope)
        return;
    // recursive directory replication
    std::string error;
    auto plain = decryptEnvelope(decodeEnvelope(packet.content), &error);
    if (!plain || !looksLikeDirectory(*plain))
        return;
    announcePrefix(Prefix{base.principal, base.components});
    DirectoryDoc doc = decodeDirectory(*plain);
    for (const auto& [component, entry] : doc.entries) {
        if (entry.tombstone)
            continue;
        if (replicas_.count(entry.target.withoutVersion()))
            continue;
        PendingFetch fetch;
        fetch.interestName = entry.target.withoutVersion();
        fetch.purpose = FetchPurpose::ReplicateAdd;
        auto metaIt = lastKnownMeta_.find(fetch.interestName);
        if (metaIt != lastKnownMeta_.end())
            fetch.modification = metaIt->second;
        fetch.replicateRoot = replicateRoot;
        expressInterest(std::move(fetch));
    }
}

void Node::applyPrefixLog(const PendingFetch& fetch, const DataPacket& packet)
{
    PrefixLog log;
    try {
        log = decodePrefixLog(packet.content);
    } catch (const Error&) {
        return;
    }
    for (const auto& entryBytes : log.entries) {
        Announcement ann;
        try {
            ann = decodeAnnouncement(entryBytes);
        } catch (const Error&) {
            continue;
        }
        AnnouncementEffect effect = router_.processAnnouncement(ann, fetch.sourcePeer, env_.now());
        if (!effect.accepted())
            continue; // duplicates land here as Replayed: the dedupe rule
        lastRejoinMissed_.push_back(ann);
        appendPrefixLog(ann);
        if (ann.kind == AnnouncementKind::Modification) {
            env_.traceModification(id_, ann.modification->name.withoutVersion(),
                                   ann.modification->version);
            reactToModification(*ann.modification, fetch.sourcePeer);
        } else if (ann.kind == AnnouncementKind::Regular && !ann.withdraw) {
            prefixHolders_[ann.prefix].insert(fetch.sourcePeer);
        }
    }
    if (log.totalSeen > log.entries.size()) {
        // the ring dropped history: fall back to full replica comparison
        PendingFetch manifest;
        manifest.purpose = FetchPurpose::Manifest;
        manifest.retriesLeft = config_.logFetchRetries;
        manifest.sourcePeer = fetch.sourcePeer;
        expressInterest(std::move(manifest));
    }
}

void Node::applyManifest(const PendingFetch& fetch, const DataPacket& packet)
{
    std::vector<ManifestEntry> entries;
    try {
        entries = decodeManifest(packet.content);
    } catch (const Error&) {
        return;
    }
    for (const auto& e : entries) {
        if (!replicas_.count(e.name.withoutVersion()))
            continue;
        ModificationInfo mod;
        mod.name = e.name;
        mod.version = e.version;
        mod.vv = e.vv;
        reactToModification(mod, fetch.sourcePeer);
    }
}

void Node::rejoin()
{
    lastRejoinMissed_.clear();
    auto reachable = reachablePeers();
    if (reachable.empty())
        fail(Errc::NoNeighborsReachable, id_);
    for (const auto& peer : reachable) {
        PendingFetch fetch;
        fetch.purpose = FetchPurpose::PrefixLog;
        fetch.retriesLeft = config_.logFetchRetries;
        fetch.sourcePeer = peer;
        expressInterest(std::move(fetch));
    }
}

// ---------------------------------------------------------------------------
// Fetch plumbing

void Node::expressInterest(PendingFetch fetch)
{
    if (fetch.purpose == FetchPurpose::PrefixLog || fetch.purpose == FetchPurpose::Manifest) {
        auto [label, leaf] = splitDeviceId(fetch.sourcePeer);
        auto principalIt = peerPrincipals_.find(label);
        if (principalIt == peerPrincipals_.end())
            return; // never introduced: cannot name the peer's device files
        fetch.interestName =
            Name{Principal{principalIt->second, label},
                 {"dev", leaf,
                  fetch.purpose == FetchPurpose::PrefixLog ? "received_prefix" : "manifest"},
                 std::nullopt, std::nullopt};
    }
    auto [it, inserted] = pendingFetches_.try_emplace(fetch.interestName, fetch);
    if (!inserted) {
        // an equivalent fetch is already in flight; sync purposes win over gets
        if (it->second.purpose == FetchPurpose::UserGet &&
            fetch.purpose != FetchPurpose::UserGet)
            it->second = fetch;
        return;
    }
    fireInterest(it->second);
}

void Node::fireInterest(PendingFetch& fetch)
{
    InterestPacket interest{fetch.interestName, env_.rng().nextU64()};
    fetch.nextRetryAt = env_.now() + config_.fetchRetryMs;
    InterestAction action = router_.processInterest(interest, id_, env_.now());
    serveLocal(interest, id_, action);
}

void Node::completeFetches(const DataPacket& packet)
{
    Name base = packet.name.withoutVersion();
    std::vector<PendingFetch> matched;
    for (auto it = pendingFetches_.begin(); it != pendingFetches_.end();) {
        const Name& want = it->first;
        bool match = want == packet.name || (!want.version && want == base);
        if (match) {
            matched.push_back(std::move(it->second));
            it = pendingFetches_.erase(it);
        } else {
            ++it;
        }
    }
    for (auto& fetch : matched)
        completeFetch(std::move(fetch), packet);
}

void Node::completeFetch(PendingFetch fetch, const DataPacket& packet)
{
    switch (fetch.purpose) {
    case FetchPurpose::UserGet: {
        GetResult result;
        result.name = fetch.interestName;
        result.satisfied = true;
        result.version = packet.name.version.value_or(0);
        if (isEnvelopeContent(packet.content)) {
            std::string error;
            auto plain = decryptEnvelope(decodeEnvelope(packet.content), &error);
            if (plain) {
                result.decrypted = true;
                result.plaintextHash = crypto::sha256(*plain);
            } else {
                result.error = error;
            }
        } else {
            result.decrypted = true;
            result.plaintextHash = crypto::sha256(packet.content);
        }
        gets_.push_back(std::move(result));
        return;
    }
    case FetchPurpose::SyncUpdate:
        applyFetchedUpdate(fetch, packet);
        return;
    case FetchPurpose::SyncDelta: {
        if (!fetch.modification)
            return;
        const ModificationInfo& mod = *fetch.modification;
        Name base = mod.name.withoutVersion();
        auto it = replicas_.find(base);
        if (it == replicas_.end())
            return;
        Replica& rep = it->second;
        Bytes reconstructed;
        try {
            DeltaDoc delta = decodeDelta(packet.content);
            reconstructed = applyDelta(rep.envelopeWire, delta, rep.currentVersion);
        } catch (const Error&) {
            // wrong base or malformed: fall back to a full fetch
            PendingFetch full;
            full.interestName = base.withVersion(mod.version);
            full.purpose = FetchPurpose::SyncUpdate;
            full.modification = mod;
            expressInterest(std::move(full));
            return;
        }
        // re-sign the reconstructed packet so it can be served onward
        DataPacket rebuilt = makeDataPacket(principalKey_, base.withVersion(mod.version),
                                            std::move(reconstructed),
                                            base.principal == principal_
                                                ? std::nullopt
                                                : delegationCovering(base));
        applyFetchedUpdate(fetch, rebuilt);
        return;
    }
    case FetchPurpose::ConflictCopy:
        applyConflictCopy(fetch, packet);
        return;
    case FetchPurpose::ReplicateAdd:
        adoptReplica(packet, fetch.modification, fetch.replicateRoot);
        return;
    case FetchPurpose::PrefixLog:
        applyPrefixLog(fetch, packet);
        return;
    case FetchPurpose::Manifest:
        applyManifest(fetch, packet);
        return;
    }
}

} // namespace pcn
