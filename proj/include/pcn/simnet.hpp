#pragma once

#include "pcn/node.hpp"

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace pcn {

/// Principals, friendship edges and the devices each principal owns.
struct SocialGraph {
    std::set<std::string> principals;
    std::set<std::pair<std::string, std::string>> edges; // stored with first < second
    std::map<std::string, std::vector<std::string>> devices;

    void addEdge(std::string a, std::string b)
    {
        if (a > b)
            std::swap(a, b);
        edges.insert({std::move(a), std::move(b)});
    }
    bool hasEdge(const std::string& a, const std::string& b) const
    {
        return edges.count(a < b ? std::pair{a, b} : std::pair{b, a}) > 0;
    }
};

/// Peer lists per device: every device of the same principal plus every
/// device of principals within k social hops (k in {1, 2}).
std::map<DeviceId, std::vector<DeviceId>> buildOverlay(const SocialGraph& graph, int k);

// ---------------------------------------------------------------------------
// Scenarios

struct ScenarioAction {
    enum class Kind {
        Publish,
        Update,
        Get,
        Replicate,
        ReplicateCmd,
        UnreplicateCmd,
        Announce,
        AnnouncePrefixes,
        Down,
        Partition,
        Loss,
        Rekey,
        Issue,
        Revoke,
        Resolve,
    };
    Kind kind{};
    std::int64_t at = 0;
    DeviceId device;     // acting device
    DeviceId targetDevice; // replicate-cmd target
    std::string nameText;
    std::string content; // "text:..." / "bytes:N"
    std::string readPolicy;
    std::string writePolicy;
    int count = 0;
    std::int64_t durationMs = 0;
    double rate = 0.0;
    std::vector<DeviceId> groupA, groupB; // partition sides
    std::string owner, holder;            // issue / rekey / revoke
    std::vector<std::string> attrs;
    std::optional<std::size_t> alternative; // resolve: alt index (nullopt == local)
};

struct Expectation {
    DeviceId device; // empty for run-level expectations
    std::string metric;
    std::string op; // == != >= <= > <
    double value = 0;
    std::string raw; // original line for the report
};

struct FibEstimate {
    int k = 1;
    int branching = 0;
    int prefixes = 0;
    std::size_t entryBytes = 0;
};

struct SimConfig {
    std::int64_t latencySameMs = 5;
    std::int64_t latencyCrossMs = 50;
    int floodHops = 1; // overlay breadth k
    std::int64_t timeLimitMs = 30 * 60'000;
    std::int64_t quiescenceWindowMs = 60'000;
    std::optional<std::size_t> fibEntryAccountingBytes;
    NodeConfig node;
};

struct Issuance {
    std::string owner, holder;
    std::vector<std::string> attrs;
};

struct DelegationDecl {
    std::string owner, delegate;
    std::string prefixText;
};

struct Scenario {
    std::string name = "scenario";
    SimConfig config;
    SocialGraph graph;
    std::map<std::string, std::vector<std::string>> attributeUniverse; // owner -> attrs
    std::vector<Issuance> issuances;
    std::vector<DelegationDecl> delegations;
    std::vector<ScenarioAction> actions;
    std::vector<Expectation> expectations;
    std::vector<FibEstimate> estimates;
    std::optional<std::int64_t> runUntil;

    /// Line-oriented text form; throws Error(ScenarioParseError).
    static Scenario parseText(std::string_view text, std::string name = "scenario");
    static Scenario parseFile(const std::string& path);
};

// ---------------------------------------------------------------------------
// Reports

struct ReplicaReport {
    std::string name;
    std::int64_t version = 0;
    std::string vv;
    ReplicaState state = ReplicaState::Clean;
    std::size_t alternatives = 0;
    std::string contentHash; // envelope wire hash
};

struct GetReport {
    std::string name;
    bool satisfied = false;
    bool decrypted = false;
    std::string error;
    std::string plaintextHash;
};

struct NodeReport {
    DeviceId id;
    RouterMetrics metrics;
    std::size_t fibEntries = 0;
    std::size_t fibBytes = 0;
    std::size_t cacheSize = 0;
    std::size_t repoSize = 0;
    std::size_t pitSize = 0;
    std::vector<ReplicaReport> replicas;
    std::vector<GetReport> gets;
    std::vector<std::string> directoryConflicts;
    std::uint64_t writeRejections = 0;
};

struct AssertionResult {
    std::string text;
    bool passed = false;
};

struct TraceReport {
    std::string scenario;
    std::uint64_t seed = 0;
    std::int64_t endTimeMs = 0;
    bool quiescent = false;
    bool timedOut = false;
    std::uint64_t eventsProcessed = 0;
    std::uint64_t framesDelivered = 0;
    std::uint64_t framesDropped = 0;
    std::uint64_t coherenceViolations = 0;
    std::vector<std::string> coherenceDetails;
    std::vector<NodeReport> nodes;
    std::vector<AssertionResult> assertions;
    std::vector<std::string> estimateLines;

    bool allAssertionsPassed() const
    {
        for (const auto& a : assertions)
            if (!a.passed)
                return false;
        return true;
    }
    std::string renderText() const;
    std::string renderJson() const;
};

// ---------------------------------------------------------------------------
// Simulation

/// Deterministic discrete-event simulator. Nodes are cooperatively scheduled
/// from one event queue; identical (scenario, seed) pairs produce identical
/// traces.
class Simulation : public NodeEnv {
public:
    Simulation(const Scenario& scenario, std::uint64_t seed);
    ~Simulation() override;

    TraceReport run();

    /// Programmatic fault injection (scenario actions route through these).
    void injectNodeDown(const DeviceId& device, std::int64_t at, std::int64_t durationMs);
    void injectPartition(std::vector<DeviceId> a, std::vector<DeviceId> b, std::int64_t at,
                         std::int64_t durationMs);
    void injectMessageLoss(double rate, std::int64_t at, std::int64_t durationMs);

    Node& node(const DeviceId& id);
    bool hasNode(const DeviceId& id) const { return nodes_.count(id) > 0; }
    const Resolver& resolver() const { return resolver_; }
    const std::map<std::string, KeyPair>& principalKeys() const { return principalKeys_; }

    // NodeEnv
    std::int64_t now() override { return now_; }
    Rng& rng() override { return rng_; }
    void sendFrame(const DeviceId& from, const DeviceId& to, Bytes frame) override;
    void scheduleWake(const DeviceId& device, std::int64_t atMs, std::uint64_t token) override;
    void traceServe(const DeviceId& device, const Name& name, std::int64_t version,
                    bool fromCache) override;
    void traceModification(const DeviceId& device, const Name& name,
                           std::int64_t version) override;

private:
    struct Event {
        enum class Kind {
            Deliver,
            Wake,
            NodeDown,
            NodeUp,
            PartitionStart,
            PartitionEnd,
            LossStart,
            LossEnd,
            UserAction
        };
        Kind kind{};
        DeviceId from, to;
        Bytes frame;
        std::uint64_t wakeToken = 0;
        std::size_t index = 0; // user action / partition id
        double rate = 0.0;
    };

    void setupPrincipals();
    void setupNodes();
    void push(std::int64_t at, Event event);
    bool frameBlocked(const DeviceId& from, const DeviceId& to) const;
    bool isMaintenance(const Event& e) const;
    void execute(const Event& e);
    void runUserAction(const ScenarioAction& action);
    Name parseScenarioName(const std::string& text) const;
    Bytes actionContent(const std::string& spec) const;
    void evaluateExpectations(TraceReport& report) const;
    NodeReport buildNodeReport(const Node& node) const;

    Scenario scenario_;
    std::uint64_t seed_;
    SeededRng rng_;
    std::int64_t now_ = 0;
    std::uint64_t seq_ = 0;
    std::multimap<std::pair<std::int64_t, std::uint64_t>, Event> queue_;
    std::size_t pendingProtocol_ = 0; // non-maintenance events still queued

    std::map<std::string, KeyPair> principalKeys_;
    std::map<std::string, AbeKeyring> keyrings_;
    Resolver resolver_;
    std::map<DeviceId, std::unique_ptr<Node>> nodes_;
    std::set<DeviceId> downNodes_;
    std::map<std::size_t, std::pair<std::set<DeviceId>, std::set<DeviceId>>> partitionDecls_;
    std::map<std::size_t, std::pair<std::set<DeviceId>, std::set<DeviceId>>> partitions_;
    std::size_t nextPartitionId_ = 0;
    double lossRate_ = 0.0;

    std::int64_t lastActivity_ = 0;
    std::uint64_t eventsProcessed_ = 0;
    std::uint64_t framesDelivered_ = 0;
    std::uint64_t framesDropped_ = 0;

    // cache-coherence trace checker
    std::map<std::pair<DeviceId, Bytes>, std::int64_t> coherenceFloor_;
    std::uint64_t coherenceViolations_ = 0;
    std::vector<std::string> coherenceDetails_;
};

TraceReport runScenario(const Scenario& scenario, std::uint64_t seed);

} // namespace pcn
