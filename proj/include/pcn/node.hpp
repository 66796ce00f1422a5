#pragma once

#include "pcn/envelope.hpp"
#include "pcn/replica_cmd.hpp"
#include "pcn/router.hpp"
#include "pcn/sync.hpp"

#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <vector>

namespace pcn {

struct NodeConfig {
    RouterConfig router;
    std::int64_t pingIntervalMs = 10'000;
    std::int64_t housekeepingIntervalMs = 1'000;
    std::int64_t fetchRetryMs = 2'000;
    int logFetchRetries = 3; // bounded; reachability transitions re-trigger rejoin
    std::int64_t commandExpiryMs = kCommandExpiryMs;
    std::size_t prefixLogCapacity = 10'000;
    bool emitDeltas = true;
    bool announceDevicePrefix = true;
};

/// Services a node needs from its host (the simulator, or a process shell).
/// One node == one event loop: every callback into the node happens on it.
class NodeEnv {
public:
    virtual ~NodeEnv() = default;
    virtual std::int64_t now() = 0;
    virtual Rng& rng() = 0;
    virtual void sendFrame(const DeviceId& from, const DeviceId& to, Bytes frame) = 0;
    virtual void scheduleWake(const DeviceId& device, std::int64_t atMs, std::uint64_t token) = 0;
    /// Trace hooks for the report and the cache-coherence checker.
    virtual void traceServe(const DeviceId&, const Name&, std::int64_t /*version*/,
                            bool /*fromCache*/)
    {
    }
    virtual void traceModification(const DeviceId&, const Name&, std::int64_t /*version*/) {}
};

enum class FetchPurpose { UserGet, SyncUpdate, SyncDelta, ConflictCopy, ReplicateAdd, PrefixLog, Manifest };

struct GetResult {
    Name name;
    bool satisfied = false;   // content arrived (or was local)
    bool decrypted = false;
    std::string error;        // "policy not satisfied", ...
    Digest plaintextHash{};   // when decrypted
    std::int64_t version = 0;
};

struct DirConflictRecord {
    Name directory;
    DirConflict conflict;
};

/// The device's append-only log of received prefix announcements, served as
/// ordinary content under "<principal>/dev/<device>/received_prefix".
struct PrefixLog {
    std::uint64_t totalSeen = 0; // > entries.size() once the ring dropped entries
    std::deque<Bytes> entries;   // encoded announcements, arrival order
};

Bytes encodePrefixLog(const PrefixLog& log);
PrefixLog decodePrefixLog(BytesView bytes);

struct ManifestEntry {
    Name name; // version-less
    std::int64_t version = 0;
    VersionVector vv;
};

Bytes encodeManifest(const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> decodeManifest(BytesView bytes);

/// One PCN device: forwarding engine, replica table, keystore, device files
/// and the timers that drive synchronization. Owned and driven by a NodeEnv.
class Node {
public:
    Node(DeviceId id, std::string principalLabel, KeyPair principalKey, NodeEnv& env,
         NodeConfig config = {});

    // --- wiring (scenario / CLI setup) ---
    void setPeers(std::vector<DeviceId> peers);
    void addKnownPrincipal(const std::string& label, BytesView publicKey);
    void installKeyring(AbeKeyring keyring); // owner devices (holds MK)
    void installAbePublicKey(const AbePublicKey& pk);
    void installAttributeKey(const AttributeSecretKey& sk);
    void installDelegation(DelegationCert cert);
    /// Persistence restore hooks (used when a repo directory is reopened).
    void restoreReplica(Replica replica);
    void restorePrefixLog(PrefixLog log);
    void restoreClock(std::int64_t lastVersion);
    void start();
    /// Crash-recovery: volatile state (cache, PIT, FIB, liveness, pending
    /// fetches) is lost; repository, replicas, logs and keys survive.
    void restart();

    // --- event loop entry points ---
    void onFrame(const DeviceId& from, BytesView frame);
    void onWake(std::uint64_t token);

    // --- user operations ---
    Name publish(const Name& name, BytesView content, const PolicyTree& readPolicy,
                 const PolicyTree& writePolicy);
    Name update(const Name& name, BytesView content);
    void requestGet(const Name& name);
    std::optional<Bytes> getLocal(const Name& name, std::string* error = nullptr);
    void replicate(const Name& name);
    void announcePrefix(const Prefix& prefix);
    void issueCommand(const Name& deviceName, CommandOp op, const Name& target);
    void rekey();
    void revokeIdentity();
    AttributeSecretKey issueAttributeKey(const AttributeSet& attrs, const Principal& holder);
    void resolveConflict(const Name& name, std::optional<std::size_t> alternativeIndex);
    /// Announcements accepted during the last rejoin pass.
    const std::vector<Announcement>& lastRejoinMissed() const { return lastRejoinMissed_; }
    void rejoin(); // throws NoNeighborsReachable when every peer is down

    // --- inspection ---
    const DeviceId& id() const { return id_; }
    const Principal& principal() const { return principal_; }
    const KeyPair& principalKey() const { return principalKey_; }
    Name deviceName() const;
    Router& router() { return router_; }
    const Router& router() const { return router_; }
    const std::map<Name, Replica>& replicas() const { return replicas_; }
    const Replica* findReplica(const Name& name) const;
    const std::vector<GetResult>& gets() const { return gets_; }
    const std::vector<DirConflictRecord>& directoryConflicts() const { return dirConflicts_; }
    std::uint64_t writeRejections() const { return writeRejections_; }
    bool hasPendingWork() const;
    std::vector<DeviceId> reachablePeers() const;
    const std::map<Prefix, std::set<DeviceId>>& prefixHolders() const { return prefixHolders_; }
    const AbeKeyring* keyring() const { return keyring_ ? &*keyring_ : nullptr; }
    const PrefixLog& prefixLog() const { return prefixLog_; }
    NodeConfig& config() { return config_; }

    static constexpr std::uint64_t kWakeHousekeeping = 1;
    static constexpr std::uint64_t kWakePing = 2;

private:
    struct PendingFetch {
        Name interestName;
        FetchPurpose purpose;
        std::int64_t nextRetryAt = 0;
        int retriesLeft = -1; // -1 == unbounded
        std::optional<ModificationInfo> modification; // SyncUpdate / SyncDelta
        DeviceId sourcePeer;                          // PrefixLog / Manifest
        std::optional<Name> replicateRoot;            // ReplicateAdd (subtree fetch)
    };

    // frame handlers
    void handleInterest(const InterestPacket& interest, const DeviceId& from);
    void handleData(const DataPacket& packet, const DeviceId& from);
    void handleAnnouncement(const Announcement& ann, const DeviceId& from);
    void handlePing(BytesView frame, const DeviceId& from, bool pong);

    // sync machinery
    void reactToModification(const ModificationInfo& mod, const DeviceId& from);
    void completeFetches(const DataPacket& packet);
    void completeFetch(PendingFetch fetch, const DataPacket& packet);
    void applyFetchedUpdate(const PendingFetch& fetch, const DataPacket& packet);
    void applyConflictCopy(const PendingFetch& fetch, const DataPacket& packet);
    bool tryDirectoryMerge(Replica& replica, const ModificationInfo& mod,
                           const DataPacket& remotePacket);
    void adoptReplica(const DataPacket& packet, std::optional<ModificationInfo> meta,
                      std::optional<Name> replicateRoot);
    void applyPrefixLog(const PendingFetch& fetch, const DataPacket& packet);
    void applyManifest(const PendingFetch& fetch, const DataPacket& packet);
    void executeCommandFile(const CommandFile& file);

    // publication plumbing
    std::optional<DelegationCert> delegationCovering(const Name& name) const;
    void publishPacket(const Name& versionedName, Bytes content, bool announceModification,
                       const VersionVector& vv, std::optional<Name> deltaLink);
    void announceCore(const Announcement& ann);
    void ensureParentAnnounced(const Name& name);
    void updateDirectoriesFor(const Name& name, bool removeEntry = false);
    void writeDirectoryReplica(const Name& dirName, const DirectoryDoc& doc,
                               std::optional<VersionVector> explicitVv);
    void republishDeviceFile(const std::string& leaf, Bytes content);
    void refreshManifest();
    void appendPrefixLog(const Announcement& ann);

    // fetch plumbing
    void expressInterest(PendingFetch fetch);
    void fireInterest(PendingFetch& fetch);
    void serveLocal(const InterestPacket& interest, const DeviceId& from,
                    const InterestAction& action);
    std::optional<Bytes> decryptEnvelope(const SecureEnvelope& env, std::string* error) const;
    bool canWrite(const SecureEnvelope& env) const;
    bool verifyIncomingEnvelope(const DataPacket& packet, const SecureEnvelope& env,
                                std::int64_t version) const;
    std::int64_t monotonize(std::int64_t now);

    DeviceId id_;
    std::string principalLabel_;
    std::string deviceLeaf_;
    KeyPair principalKey_;
    Principal principal_;
    NodeEnv& env_;
    NodeConfig config_;
    KeyStore keys_;
    Router router_;

    std::vector<DeviceId> peers_;
    struct PeerState {
        bool reachable = true;
        bool pongSeenThisRound = true;
    };
    std::map<DeviceId, PeerState> peerState_;

    std::map<std::string, Digest> peerPrincipals_; // label -> key hash
    std::optional<AbeKeyring> keyring_; // own (MK on owner devices)
    std::map<Digest, AbePublicKey> abePublicKeys_;
    std::map<std::pair<Digest, std::uint32_t>, AttributeSecretKey> attributeKeys_;
    std::vector<DelegationCert> delegations_;

    std::map<Name, Replica> replicas_;
    std::map<Name, ModificationInfo> lastKnownMeta_;
    std::map<Name, PendingFetch> pendingFetches_;
    std::set<Prefix> announcedPrefixes_;
    std::map<Prefix, std::set<DeviceId>> prefixHolders_;
    PrefixLog prefixLog_;
    std::set<Digest> executedCommands_;
    std::vector<GetResult> gets_;
    std::vector<DirConflictRecord> dirConflicts_;
    std::vector<Announcement> lastRejoinMissed_;
    std::uint64_t writeRejections_ = 0;
    std::int64_t lastVersion_ = 0;
    bool started_ = false;
};

} // namespace pcn
