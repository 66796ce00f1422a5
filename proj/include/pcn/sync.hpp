#pragma once

#include "pcn/envelope.hpp"
#include "pcn/version_vector.hpp"
#include "pcn/wire.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace pcn {

enum class ReplicaState { Clean, Dirty, Conflicted };

const char* replicaStateName(ReplicaState s);

struct RevisionRecord {
    Digest author{};
    std::int64_t timestamp = 0;
    std::int64_t version = 0;
    Digest contentHash{}; // hash of the envelope wire bytes
};

/// A concurrent head preserved when a conflict is flagged; nothing accepted
/// is ever lost.
struct ConflictAlternative {
    std::int64_t version = 0;
    VersionVector vv;
    Bytes envelopeWire;
};

/// Local copy of one replicated file.
struct Replica {
    Name name; // version-less
    std::int64_t currentVersion = 0;
    VersionVector vv;
    Bytes envelopeWire;
    ReplicaState state = ReplicaState::Clean;
    std::vector<RevisionRecord> history;
    std::vector<ConflictAlternative> alternatives;
};

/// "author-keyhash-hex timestamp version contenthash-hex" per line.
std::string exportRevisionHistory(const Replica& replica);

// ---------------------------------------------------------------------------
// Directory documents

/// One directory entry. Tombstones keep their version vector: a deleted
/// entry must stay distinguishable from a never-seen one.
struct DirEntry {
    Name target;
    VersionVector vv;
    bool tombstone = false;

    friend bool operator==(const DirEntry&, const DirEntry&) = default;
};

/// A directory is an ordinary file whose plaintext is this document, so it is
/// enveloped, replicated and announced like any other content.
struct DirectoryDoc {
    std::map<std::string, DirEntry> entries;

    /// Live-entry insert/update by `device`; bumps the entry-level vv.
    void put(const std::string& component, const Name& target, const DeviceId& device);
    /// Tombstone by `device`; keeps and bumps the vv.
    void remove(const std::string& component, const DeviceId& device);
    /// Live entries only.
    std::vector<std::string> listing() const;

    friend bool operator==(const DirectoryDoc&, const DirectoryDoc&) = default;
};

Bytes encodeDirectory(const DirectoryDoc& doc);
DirectoryDoc decodeDirectory(BytesView bytes);
bool looksLikeDirectory(BytesView plaintext);

enum class DirConflictKind { NameConflict, RemoveUpdate };

struct DirConflict {
    std::string component;
    DirConflictKind kind;
};

/// Ficus-style entry-level merge:
///  - entry on one side only, not dominated by the other side's tombstone →
///    kept (an insert wins over a delete that never saw it)
///  - tombstone dominating the entry vv → entry stays deleted
///  - concurrent live entries with different targets → name conflict; both
///    kept under deterministic "#<device>" rename suffixes
///  - concurrent tombstone vs live entry → live entry kept, conflict recorded
/// Deterministic and symmetric: merge(a, b) == merge(b, a).
std::pair<DirectoryDoc, std::vector<DirConflict>> mergeDirectory(const DirectoryDoc& local,
                                                                 const DirectoryDoc& remote);

// ---------------------------------------------------------------------------
// Delta transfer

struct DeltaRecord {
    std::uint64_t offset = 0;    // position in the base
    std::uint64_t deleteLen = 0; // bytes removed from the base
    Bytes insert;                // bytes inserted instead
};

/// Edit script between two envelope serializations, published as an ordinary
/// named file and referenced by a modification announcement's delta link.
struct DeltaDoc {
    std::int64_t baseVersion = 0;
    std::vector<DeltaRecord> records;
};

Bytes encodeDelta(const DeltaDoc& doc);
DeltaDoc decodeDelta(BytesView bytes);

/// applyDelta(b, makeDelta(b, n)) is byte-identical to n.
DeltaDoc makeDelta(BytesView baseBytes, BytesView newBytes, std::int64_t baseVersion);
/// Throws BaseMismatch unless localBaseVersion equals the delta's base.
Bytes applyDelta(BytesView baseBytes, const DeltaDoc& delta, std::int64_t localBaseVersion);

} // namespace pcn
