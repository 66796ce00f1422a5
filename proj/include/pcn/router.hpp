#pragma once

#include "pcn/identity.hpp"
#include "pcn/naming.hpp"
#include "pcn/wire.hpp"

#include <list>
#include <map>
#include <optional>
#include <set>
#include <vector>

namespace pcn {

/// Public keys of known principals (self, introduced friends) plus the
/// revocation set. Every signature check resolves key hashes through this.
class KeyStore {
public:
    void addKey(BytesView publicKey);
    const Bytes* find(const Digest& keyHash) const;
    void revoke(const Digest& keyHash) { revoked_.insert(keyHash); }
    bool isRevoked(const Digest& keyHash) const { return revoked_.count(keyHash) > 0; }

private:
    std::map<Digest, Bytes> keys_;
    std::set<Digest> revoked_;
};

/// Bounded recently-seen set (duplicate interest nonces, announcement replay).
template <typename K>
class LruSet {
public:
    explicit LruSet(std::size_t capacity) : capacity_(capacity) {}
    bool contains(const K& k) const { return index_.count(k) > 0; }
    /// Returns false if already present; inserts (evicting the oldest) otherwise.
    bool insert(const K& k)
    {
        if (contains(k))
            return false;
        order_.push_back(k);
        index_[k] = std::prev(order_.end());
        if (order_.size() > capacity_) {
            index_.erase(order_.front());
            order_.pop_front();
        }
        return true;
    }

private:
    std::size_t capacity_;
    std::list<K> order_;
    std::map<K, typename std::list<K>::iterator> index_;
};

struct FibEntry {
    Prefix prefix;
    std::set<DeviceId> faces;
    Bytes originSignature;
    Digest originKeyHash{};
    std::int64_t expiresAt = 0;
};

struct PitEntry {
    Name name;
    std::set<DeviceId> incomingFaces;
    std::int64_t createdAt = 0;
    std::int64_t ttlMs = 0;
};

/// Two-tier storage: bounded in-memory cache (least-recently-served eviction)
/// over a persistent repository. Lookups try the cache first. Entries below a
/// name's invalidation floor are never served from either tier.
class ContentStore {
public:
    explicit ContentStore(std::size_t cacheCapacity) : cacheCapacity_(cacheCapacity) {}

    struct Found {
        DataPacket packet;
        bool fromCache = false;
    };

    void cacheInsert(const DataPacket& packet, const Digest& signer);
    void repoInsert(const DataPacket& packet, const Digest& signer);
    void repoErase(const Name& name);
    void clearCache()
    {
        cache_.clear();
        cacheOrder_.clear();
    }

    /// Exact match when the interest names a version; otherwise the highest
    /// stored version (>= minVersion when set).
    std::optional<Found> lookup(const Name& interestName,
                                std::optional<std::int64_t> minVersion);

    /// Drop cache entries for this name older than minVersion; returns how
    /// many stored packets (both tiers) fell below the floor.
    int invalidateOlder(const Name& name, std::int64_t minVersion);
    /// Remove every cached packet attributable to a revoked key.
    void purgeBySigner(const Digest& keyHash);

    std::size_t cacheSize() const { return cacheOrder_.size(); }
    std::size_t repoSize() const { return repo_.size(); }
    bool repoHas(const Name& name) const { return repo_.count(name) > 0; }
    const DataPacket* repoFind(const Name& name) const;
    template <typename F>
    void forEachRepo(F&& f) const
    {
        for (const auto& [name, stored] : repo_)
            f(name, stored.packet);
    }

private:
    struct Stored {
        DataPacket packet;
        Digest signer{};
    };
    using CacheMap = std::map<Name, std::pair<Stored, std::list<Name>::iterator>>;

    void touch(CacheMap::iterator it);
    std::optional<Name> bestVersion(const std::map<Name, Stored>& tier, const Name& base,
                                    std::optional<std::int64_t> minVersion) const;
    std::optional<Name> bestCacheVersion(const Name& base,
                                         std::optional<std::int64_t> minVersion) const;

    std::size_t cacheCapacity_;
    CacheMap cache_;
    std::list<Name> cacheOrder_; // front = least recently served
    std::map<Name, Stored> repo_;
};

enum class RejectReason { BadSignature, Expired, Replayed, BadDelegation };

const char* rejectReasonName(RejectReason r);

struct AnnouncementEffect {
    enum Kind { FibUpdated, CacheInvalidated, KeyRevoked, Rejected } kind;
    int invalidatedCount = 0;                         // CacheInvalidated
    RejectReason reason = RejectReason::BadSignature; // Rejected

    bool accepted() const { return kind != Rejected; }
};

struct InterestAction {
    enum Kind { Serve, Forward, Drop } kind = Drop;
    std::optional<DataPacket> packet;  // Serve
    bool servedFromCache = false;      // Serve
    std::vector<DeviceId> faces;       // Forward
    std::string dropReason;            // Drop
};

struct DataResult {
    bool accepted = false;
    bool cached = false;
    std::set<DeviceId> deliverTo; // PIT reverse-path faces (excluding arrival)
};

struct RouterConfig {
    std::size_t cacheCapacity = 64;
    std::int64_t pitTtlMs = 4'000;
    std::int64_t announcementLifetimeMs = 24 * 3'600'000;
    std::size_t seenLruCapacity = 4'096;
    bool forwardMulticast = false;
    bool cacheUnsolicitedData = false;
};

struct RouterMetrics {
    std::uint64_t interestsIn = 0;
    std::uint64_t interestsOut = 0;
    std::uint64_t interestsDroppedDup = 0;
    std::uint64_t interestsDroppedNoRoute = 0;
    std::uint64_t dataIn = 0;
    std::uint64_t dataServedCache = 0;
    std::uint64_t dataServedRepo = 0;
    std::uint64_t dataDroppedBadSignature = 0;
    std::uint64_t dataDroppedStale = 0;
    std::uint64_t announcementsAccepted = 0;
    std::map<std::string, std::uint64_t> announcementsRejected; // by reason
    std::uint64_t cacheInvalidations = 0;
};

/// Per-node forwarding engine. Single-threaded by contract: every call runs
/// on the owning node's event loop.
class Router {
public:
    Router(DeviceId self, KeyStore& keys, RouterConfig config);

    InterestAction processInterest(const InterestPacket& interest, const DeviceId& fromFace,
                                   std::int64_t now);
    DataResult processData(const DataPacket& packet, const DeviceId& fromFace, std::int64_t now);
    AnnouncementEffect processAnnouncement(const Announcement& ann, const DeviceId& fromFace,
                                           std::int64_t now);

    /// Build a signed announcement. Throws NotAuthorized unless the signer is
    /// the prefix owner or the delegation covers the prefix for the signer.
    Announcement makeAnnouncement(AnnouncementKind kind, const Prefix& prefix,
                                  const KeyPair& signer, std::int64_t now, Rng& rng,
                                  std::optional<ModificationInfo> modification = std::nullopt,
                                  std::optional<DelegationCert> delegation = std::nullopt,
                                  bool withdraw = false,
                                  std::optional<Digest> revokedKeyHash = std::nullopt);

    /// Drop PIT entries whose ttl elapsed.
    void expirePit(std::int64_t now);

    /// Crash recovery: drop everything that would not survive a reboot (FIB,
    /// PIT, memory cache, seen sets). Repository, floors and metrics survive.
    void clearVolatile();

    ContentStore& store() { return store_; }
    const ContentStore& store() const { return store_; }
    KeyStore& keys() { return keys_; }
    RouterMetrics& metrics() { return metrics_; }
    const RouterMetrics& metrics() const { return metrics_; }
    const RouterConfig& config() const { return config_; }

    std::size_t fibEntryCount() const { return fib_.size(); }
    std::size_t pitSize() const { return pit_.size(); }
    /// Serialized size of every live FIB entry (prefix + faces + signature +
    /// expiry), or entries * accountingBytes when an accounting size is set.
    std::size_t fibByteSize(std::optional<std::size_t> accountingBytes) const;
    template <typename F>
    void forEachFib(F&& f) const
    {
        fib_.forEach(f);
    }
    std::optional<std::int64_t> versionFloor(const Name& name) const;

    /// Signature/authority check shared with data-plane verification. Returns
    /// the signer key hash on success.
    std::optional<Digest> verifyDataPacket(const DataPacket& packet, std::int64_t now) const;

private:
    AnnouncementEffect reject(RejectReason reason);
    bool delegationValid(const DelegationCert& cert, const Prefix& announced,
                         std::int64_t now) const;

    DeviceId self_;
    KeyStore& keys_;
    RouterConfig config_;
    RouterMetrics metrics_;
    TriePrefixTable<FibEntry> fib_;
    std::map<Name, PitEntry> pit_;
    ContentStore store_;
    LruSet<std::uint64_t> seenInterestNonces_;
    LruSet<std::pair<Digest, std::uint64_t>> seenAnnouncements_;
    std::map<Name, std::int64_t> versionFloor_; // name (version-less) -> min version
};

} // namespace pcn
