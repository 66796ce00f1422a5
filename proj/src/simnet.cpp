#include "pcn/simnet.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>

namespace pcn {

// ---------------------------------------------------------------------------
// Overlay construction

std::map<DeviceId, std::vector<DeviceId>> buildOverlay(const SocialGraph& graph, int k)
{
    if (k != 1 && k != 2)
        fail(Errc::ScenarioParseError, "overlay hop limit must be 1 or 2");

    // adjacency on principals
    std::map<std::string, std::set<std::string>> adj;
    for (const auto& [a, b] : graph.edges) {
        adj[a].insert(b);
        adj[b].insert(a);
    }

    std::map<DeviceId, std::vector<DeviceId>> peers;
    for (const auto& principal : graph.principals) {
        // BFS out to k hops
        std::set<std::string> within{principal};
        std::deque<std::pair<std::string, int>> frontier{{principal, 0}};
        while (!frontier.empty()) {
            auto [p, d] = frontier.front();
            frontier.pop_front();
            if (d == k)
                continue;
            for (const auto& n : adj[p])
                if (within.insert(n).second)
                    frontier.push_back({n, d + 1});
        }
        auto devicesOf = [&](const std::string& p) {
            auto it = graph.devices.find(p);
            return it == graph.devices.end() ? std::vector<std::string>{} : it->second;
        };
        for (const auto& leaf : devicesOf(principal)) {
            DeviceId self = principal + "." + leaf;
            std::vector<DeviceId> list;
            for (const auto& p : within)
                for (const auto& l : devicesOf(p)) {
                    DeviceId other = p + "." + l;
                    if (other != self)
                        list.push_back(other);
                }
            std::sort(list.begin(), list.end());
            peers[self] = std::move(list);
        }
    }
    return peers;
}

// ---------------------------------------------------------------------------
// Scenario parsing

namespace {

std::vector<std::string> tokenize(const std::string& line)
{
    std::vector<std::string> tokens;
    std::string cur;
    bool quoted = false;
    char quote = 0;
    for (char c : line) {
        if (quoted) {
            if (c == quote)
                quoted = false;
            else
                cur.push_back(c);
            continue;
        }
        if (c == '\'' || c == '"') {
            quoted = true;
            quote = c;
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) {
                tokens.push_back(cur);
                cur.clear();
            }
            continue;
        }
        cur.push_back(c);
    }
    if (quoted)
        fail(Errc::ScenarioParseError, "unterminated quote: " + line);
    if (!cur.empty())
        tokens.push_back(cur);
    return tokens;
}

std::string replaceAll(std::string s, const std::string& from, const std::string& to)
{
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
    return s;
}

std::int64_t parseI64(const std::string& s, const char* what)
{
    try {
        return std::stoll(s);
    } catch (...) {
        fail(Errc::ScenarioParseError, std::string("bad ") + what + ": " + s);
    }
}

double parseF64(const std::string& s, const char* what)
{
    try {
        return std::stod(s);
    } catch (...) {
        fail(Errc::ScenarioParseError, std::string("bad ") + what + ": " + s);
    }
}

std::vector<std::string> splitCommas(const std::string& s)
{
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty())
                out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty())
        out.push_back(cur);
    return out;
}

std::map<std::string, std::string> parseKv(const std::vector<std::string>& tokens,
                                           std::size_t start)
{
    std::map<std::string, std::string> kv;
    for (std::size_t i = start; i < tokens.size(); ++i) {
        auto eq = tokens[i].find('=');
        if (eq == std::string::npos)
            fail(Errc::ScenarioParseError, "expected key=value: " + tokens[i]);
        kv[tokens[i].substr(0, eq)] = tokens[i].substr(eq + 1);
    }
    return kv;
}

} // namespace

Scenario Scenario::parseText(std::string_view text, std::string name)
{
    Scenario sc;
    sc.name = std::move(name);

    // expand repeat lines first
    std::vector<std::string> lines;
    {
        std::istringstream in{std::string(text)};
        std::string raw;
        while (std::getline(in, raw)) {
            auto hash = raw.find('#');
            if (hash != std::string::npos)
                raw = raw.substr(0, hash);
            auto tokens = tokenize(raw);
            if (tokens.empty())
                continue;
            if (tokens[0] == "repeat") {
                if (tokens.size() < 3)
                    fail(Errc::ScenarioParseError, "repeat needs a count and a template");
                std::int64_t n = parseI64(tokens[1], "repeat count");
                std::string tmpl;
                for (std::size_t i = 2; i < tokens.size(); ++i) {
                    if (i > 2)
                        tmpl += " ";
                    tmpl += tokens[i];
                }
                for (std::int64_t i = 1; i <= n; ++i)
                    lines.push_back(replaceAll(tmpl, "{i}", std::to_string(i)));
            } else {
                lines.push_back(raw);
            }
        }
    }

    auto parseActionTail = [&](ScenarioAction& a, const std::vector<std::string>& t,
                               std::size_t i) {
        // trailing key=value settings (read=, write=)
        for (; i < t.size(); ++i) {
            if (t[i].rfind("read=", 0) == 0)
                a.readPolicy = t[i].substr(5);
            else if (t[i].rfind("write=", 0) == 0)
                a.writePolicy = t[i].substr(6);
            else
                fail(Errc::ScenarioParseError, "unexpected token: " + t[i]);
        }
    };

    for (const auto& line : lines) {
        auto t = tokenize(line);
        if (t.empty())
            continue;
        const std::string& verb = t[0];

        if (verb == "name") {
            sc.name = t.at(1);
        } else if (verb == "config") {
            const std::string& key = t.at(1);
            const std::string& value = t.at(2);
            if (key == "latency_same")
                sc.config.latencySameMs = parseI64(value, key.c_str());
            else if (key == "latency_cross")
                sc.config.latencyCrossMs = parseI64(value, key.c_str());
            else if (key == "flood_hops")
                sc.config.floodHops = static_cast<int>(parseI64(value, key.c_str()));
            else if (key == "time_limit_ms")
                sc.config.timeLimitMs = parseI64(value, key.c_str());
            else if (key == "quiescence_ms")
                sc.config.quiescenceWindowMs = parseI64(value, key.c_str());
            else if (key == "fib_entry_bytes")
                sc.config.fibEntryAccountingBytes = static_cast<std::size_t>(parseI64(value, key.c_str()));
            else if (key == "cache_capacity")
                sc.config.node.router.cacheCapacity = static_cast<std::size_t>(parseI64(value, key.c_str()));
            else if (key == "pit_ttl_ms")
                sc.config.node.router.pitTtlMs = parseI64(value, key.c_str());
            else if (key == "announcement_lifetime_ms")
                sc.config.node.router.announcementLifetimeMs = parseI64(value, key.c_str());
            else if (key == "multicast")
                sc.config.node.router.forwardMulticast = value != "0";
            else if (key == "cache_unsolicited")
                sc.config.node.router.cacheUnsolicitedData = value != "0";
            else if (key == "ping_interval_ms")
                sc.config.node.pingIntervalMs = parseI64(value, key.c_str());
            else if (key == "fetch_retry_ms")
                sc.config.node.fetchRetryMs = parseI64(value, key.c_str());
            else if (key == "log_capacity")
                sc.config.node.prefixLogCapacity = static_cast<std::size_t>(parseI64(value, key.c_str()));
            else if (key == "emit_deltas")
                sc.config.node.emitDeltas = value != "0";
            else if (key == "announce_device_prefix")
                sc.config.node.announceDevicePrefix = value != "0";
            else
                fail(Errc::ScenarioParseError, "unknown config key: " + key);
        } else if (verb == "principal") {
            sc.graph.principals.insert(t.at(1));
        } else if (verb == "device") {
            sc.graph.principals.insert(t.at(1));
            sc.graph.devices[t.at(1)].push_back(t.at(2));
        } else if (verb == "friend") {
            sc.graph.principals.insert(t.at(1));
            sc.graph.principals.insert(t.at(2));
            sc.graph.addEdge(t.at(1), t.at(2));
        } else if (verb == "attrs") {
            auto& universe = sc.attributeUniverse[t.at(1)];
            for (const auto& a : splitCommas(t.at(2)))
                universe.push_back(a);
        } else if (verb == "issue") {
            sc.issuances.push_back(Issuance{t.at(1), t.at(2), splitCommas(t.at(3))});
        } else if (verb == "delegate") {
            sc.delegations.push_back(DelegationDecl{t.at(1), t.at(3), t.at(2)});
        } else if (verb == "run_until") {
            sc.runUntil = parseI64(t.at(1), "run_until");
        } else if (verb == "estimate_fib") {
            auto kv = parseKv(t, 1);
            FibEstimate est;
            est.k = static_cast<int>(parseI64(kv.at("k"), "k"));
            est.branching = static_cast<int>(parseI64(kv.at("branching"), "branching"));
            est.prefixes = static_cast<int>(parseI64(kv.at("prefixes"), "prefixes"));
            est.entryBytes = static_cast<std::size_t>(parseI64(kv.at("entry_bytes"), "entry_bytes"));
            sc.estimates.push_back(est);
        } else if (verb == "expect") {
            Expectation e;
            e.raw = line;
            std::size_t i = 1;
            if (t.at(1) != "run") {
                e.device = t.at(1);
                i = 2;
            } else {
                i = 2;
            }
            e.metric = t.at(i++);
            e.op = t.at(i++);
            e.value = parseF64(t.at(i++), "expect value");
            sc.expectations.push_back(std::move(e));
        } else if (verb == "at") {
            ScenarioAction a;
            a.at = parseI64(t.at(1), "time");
            const std::string& what = t.at(2);
            if (what == "publish") {
                a.kind = ScenarioAction::Kind::Publish;
                a.device = t.at(3);
                a.nameText = t.at(4);
                a.content = t.at(5);
                parseActionTail(a, t, 6);
            } else if (what == "update") {
                a.kind = ScenarioAction::Kind::Update;
                a.device = t.at(3);
                a.nameText = t.at(4);
                a.content = t.at(5);
            } else if (what == "get") {
                a.kind = ScenarioAction::Kind::Get;
                a.device = t.at(3);
                a.nameText = t.at(4);
            } else if (what == "replicate") {
                a.kind = ScenarioAction::Kind::Replicate;
                a.device = t.at(3);
                a.nameText = t.at(4);
            } else if (what == "replicate-cmd" || what == "unreplicate-cmd") {
                a.kind = what == "replicate-cmd" ? ScenarioAction::Kind::ReplicateCmd
                                                 : ScenarioAction::Kind::UnreplicateCmd;
                a.device = t.at(3);
                a.targetDevice = t.at(4);
                a.nameText = t.at(5);
            } else if (what == "announce") {
                a.kind = ScenarioAction::Kind::Announce;
                a.device = t.at(3);
                a.nameText = t.at(4);
            } else if (what == "announce_prefixes") {
                a.kind = ScenarioAction::Kind::AnnouncePrefixes;
                a.device = t.at(3);
                a.count = static_cast<int>(parseI64(t.at(4), "count"));
            } else if (what == "down") {
                a.kind = ScenarioAction::Kind::Down;
                a.device = t.at(3);
                if (t.at(4) != "for")
                    fail(Errc::ScenarioParseError, "down <dev> for <ms>");
                a.durationMs = parseI64(t.at(5), "duration");
            } else if (what == "partition") {
                a.kind = ScenarioAction::Kind::Partition;
                std::size_t i = 3;
                bool second = false;
                for (; i < t.size(); ++i) {
                    if (t[i] == "|") {
                        second = true;
                        continue;
                    }
                    if (t[i] == "for") {
                        a.durationMs = parseI64(t.at(i + 1), "duration");
                        break;
                    }
                    for (const auto& d : splitCommas(t[i]))
                        (second ? a.groupB : a.groupA).push_back(d);
                }
            } else if (what == "loss") {
                a.kind = ScenarioAction::Kind::Loss;
                a.rate = parseF64(t.at(3), "rate");
                if (t.at(4) != "for")
                    fail(Errc::ScenarioParseError, "loss <rate> for <ms>");
                a.durationMs = parseI64(t.at(5), "duration");
            } else if (what == "rekey") {
                a.kind = ScenarioAction::Kind::Rekey;
                a.owner = t.at(3);
            } else if (what == "issue") {
                a.kind = ScenarioAction::Kind::Issue;
                a.owner = t.at(3);
                a.holder = t.at(4);
                a.attrs = splitCommas(t.at(5));
            } else if (what == "revoke") {
                a.kind = ScenarioAction::Kind::Revoke;
                a.device = t.at(3);
            } else if (what == "resolve") {
                a.kind = ScenarioAction::Kind::Resolve;
                a.device = t.at(3);
                a.nameText = t.at(4);
                if (t.size() > 5 && t.at(5).rfind("alt", 0) == 0)
                    a.alternative = static_cast<std::size_t>(parseI64(t.at(5).substr(3), "alt"));
            } else {
                fail(Errc::ScenarioParseError, "unknown action: " + what);
            }
            sc.actions.push_back(std::move(a));
        } else {
            fail(Errc::ScenarioParseError, "unknown directive: " + verb);
        }
    }

    std::stable_sort(sc.actions.begin(), sc.actions.end(),
                     [](const ScenarioAction& a, const ScenarioAction& b) { return a.at < b.at; });
    return sc;
}

Scenario Scenario::parseFile(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        fail(Errc::ScenarioParseError, "cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    auto slash = path.find_last_of('/');
    return parseText(buf.str(), slash == std::string::npos ? path : path.substr(slash + 1));
}

// ---------------------------------------------------------------------------
// Simulation setup

Simulation::Simulation(const Scenario& scenario, std::uint64_t seed)
    : scenario_(scenario), seed_(seed), rng_(seed)
{
    setupPrincipals();
    setupNodes();

    // schedule user actions and faults
    for (std::size_t i = 0; i < scenario_.actions.size(); ++i) {
        const auto& a = scenario_.actions[i];
        switch (a.kind) {
        case ScenarioAction::Kind::Down:
            injectNodeDown(a.device, a.at, a.durationMs);
            break;
        case ScenarioAction::Kind::Partition: {
            injectPartition(a.groupA, a.groupB, a.at, a.durationMs);
            break;
        }
        case ScenarioAction::Kind::Loss:
            injectMessageLoss(a.rate, a.at, a.durationMs);
            break;
        default: {
            Event e;
            e.kind = Event::Kind::UserAction;
            e.index = i;
            push(a.at, std::move(e));
            break;
        }
        }
    }
}

Simulation::~Simulation() = default;

void Simulation::setupPrincipals()
{
    for (const auto& label : scenario_.graph.principals) {
        KeyPair key = KeyPair::generate(rng_);
        resolver_[label] = key.principal(label);
        principalKeys_.emplace(label, std::move(key));
    }
    for (const auto& label : scenario_.graph.principals) {
        const Principal& owner = resolver_[label];
        std::vector<Attribute> universe;
        auto it = scenario_.attributeUniverse.find(label);
        if (it != scenario_.attributeUniverse.end())
            for (const auto& a : it->second)
                universe.push_back(Attribute{a, owner});
        keyrings_.emplace(label, abeSetup(owner, universe, rng_));
    }
}

void Simulation::setupNodes()
{
    auto overlay = buildOverlay(scenario_.graph, scenario_.config.floodHops);

    for (const auto& [label, leaves] : scenario_.graph.devices) {
        for (const auto& leaf : leaves) {
            DeviceId id = label + "." + leaf;
            auto node = std::make_unique<Node>(id, label, principalKeys_.at(label), *this,
                                               scenario_.config.node);
            for (const auto& [otherLabel, key] : principalKeys_)
                node->addKnownPrincipal(otherLabel, key.publicKey());
            node->installKeyring(keyrings_.at(label));
            for (const auto& [otherLabel, kr] : keyrings_)
                node->installAbePublicKey(kr.publicKey);
            auto peersIt = overlay.find(id);
            if (peersIt != overlay.end())
                node->setPeers(peersIt->second);
            nodes_.emplace(id, std::move(node));
        }
    }

    for (const auto& issuance : scenario_.issuances) {
        const AbeKeyring& kr = keyrings_.at(issuance.owner);
        AttributeSet attrs;
        for (const auto& a : issuance.attrs)
            attrs.insert(Attribute{a, resolver_.at(issuance.owner)});
        AttributeSecretKey sk = abeKeygen(kr, attrs, resolver_.at(issuance.holder));
        for (const auto& leaf : scenario_.graph.devices[issuance.holder])
            nodes_.at(issuance.holder + "." + leaf)->installAttributeKey(sk);
    }

    for (const auto& d : scenario_.delegations) {
        Prefix prefix = parsePrefix(d.prefixText, resolver_);
        DelegationCert cert = issueDelegation(principalKeys_.at(d.owner), prefix,
                                              resolver_.at(d.delegate), 0);
        for (const auto& leaf : scenario_.graph.devices[d.delegate])
            nodes_.at(d.delegate + "." + leaf)->installDelegation(cert);
    }

    for (auto& [id, node] : nodes_)
        node->start();
}

// ---------------------------------------------------------------------------
// Event machinery

bool Simulation::isMaintenance(const Event& e) const
{
    if (e.kind == Event::Kind::Wake)
        return true;
    if (e.kind == Event::Kind::Deliver && !e.frame.empty() &&
        (e.frame[0] == wire::kTagPing || e.frame[0] == wire::kTagPong))
        return true;
    return false;
}

void Simulation::push(std::int64_t at, Event event)
{
    if (!isMaintenance(event))
        ++pendingProtocol_;
    queue_.emplace(std::pair{at, seq_++}, std::move(event));
}

void Simulation::injectNodeDown(const DeviceId& device, std::int64_t at, std::int64_t durationMs)
{
    if (!nodes_.count(device))
        fail(Errc::UnknownNode, device);
    Event down;
    down.kind = Event::Kind::NodeDown;
    down.to = device;
    push(at, std::move(down));
    Event up;
    up.kind = Event::Kind::NodeUp;
    up.to = device;
    push(at + durationMs, std::move(up));
}

void Simulation::injectPartition(std::vector<DeviceId> a, std::vector<DeviceId> b,
                                 std::int64_t at, std::int64_t durationMs)
{
    for (const auto& d : a)
        if (!nodes_.count(d))
            fail(Errc::UnknownNode, d);
    for (const auto& d : b)
        if (!nodes_.count(d))
            fail(Errc::UnknownNode, d);
    std::size_t id = nextPartitionId_++;
    Event start;
    start.kind = Event::Kind::PartitionStart;
    start.index = id;
    partitionDecls_[id] = {std::set<DeviceId>(a.begin(), a.end()),
                           std::set<DeviceId>(b.begin(), b.end())};
    push(at, std::move(start));
    Event end;
    end.kind = Event::Kind::PartitionEnd;
    end.index = id;
    push(at + durationMs, std::move(end));
}

void Simulation::injectMessageLoss(double rate, std::int64_t at, std::int64_t durationMs)
{
    Event start;
    start.kind = Event::Kind::LossStart;
    start.rate = rate;
    push(at, std::move(start));
    Event end;
    end.kind = Event::Kind::LossEnd;
    push(at + durationMs, std::move(end));
}

Node& Simulation::node(const DeviceId& id)
{
    auto it = nodes_.find(id);
    if (it == nodes_.end())
        fail(Errc::UnknownNode, id);
    return *it->second;
}

bool Simulation::frameBlocked(const DeviceId& from, const DeviceId& to) const
{
    if (downNodes_.count(from) || downNodes_.count(to))
        return true;
    for (const auto& [id, sides] : partitions_) {
        const auto& [a, b] = sides;
        if ((a.count(from) && b.count(to)) || (b.count(from) && a.count(to)))
            return true;
    }
    return false;
}

void Simulation::sendFrame(const DeviceId& from, const DeviceId& to, Bytes frame)
{
    if (frameBlocked(from, to)) {
        ++framesDropped_;
        return;
    }
    if (lossRate_ > 0 && rng_.below(1'000'000) < static_cast<std::uint64_t>(lossRate_ * 1'000'000)) {
        ++framesDropped_;
        return;
    }
    auto principalOf = [](const DeviceId& d) { return d.substr(0, d.find('.')); };
    std::int64_t latency = principalOf(from) == principalOf(to) ? scenario_.config.latencySameMs
                                                                : scenario_.config.latencyCrossMs;
    Event e;
    e.kind = Event::Kind::Deliver;
    e.from = from;
    e.to = to;
    e.frame = std::move(frame);
    push(now_ + latency, std::move(e));
}

void Simulation::scheduleWake(const DeviceId& device, std::int64_t atMs, std::uint64_t token)
{
    Event e;
    e.kind = Event::Kind::Wake;
    e.to = device;
    e.wakeToken = token;
    push(atMs, std::move(e));
}

void Simulation::traceServe(const DeviceId& device, const Name& name, std::int64_t version,
                            bool /*fromCache*/)
{
    auto it = coherenceFloor_.find({device, canonicalEncode(name.withoutVersion())});
    if (it != coherenceFloor_.end() && version < it->second) {
        ++coherenceViolations_;
        if (coherenceDetails_.size() < 32)
            coherenceDetails_.push_back(device + " served " + render(name) + " v" +
                                        std::to_string(version) + " below floor " +
                                        std::to_string(it->second));
    }
}

void Simulation::traceModification(const DeviceId& device, const Name& name,
                                   std::int64_t version)
{
    auto key = std::pair{device, canonicalEncode(name.withoutVersion())};
    auto [it, inserted] = coherenceFloor_.try_emplace(key, version);
    if (!inserted)
        it->second = std::max(it->second, version);
}

// ---------------------------------------------------------------------------
// Actions

Name Simulation::parseScenarioName(const std::string& text) const
{
    return parseName(text, resolver_);
}

Bytes Simulation::actionContent(const std::string& spec) const
{
    if (spec.rfind("text:", 0) == 0)
        return toBytes(spec.substr(5));
    if (spec.rfind("bytes:", 0) == 0) {
        auto n = static_cast<std::size_t>(std::stoll(spec.substr(6)));
        Bytes out(n);
        for (std::size_t i = 0; i < n; ++i)
            out[i] = static_cast<std::uint8_t>((i * 31 + 7) & 0xff);
        return out;
    }
    fail(Errc::ScenarioParseError, "content must be text:... or bytes:N");
}

void Simulation::runUserAction(const ScenarioAction& a)
{
    switch (a.kind) {
    case ScenarioAction::Kind::Publish: {
        Node& n = node(a.device);
        PolicyTree read = a.readPolicy.empty() ? ownerOnlyPolicy(n.principal())
                                               : parsePolicy(a.readPolicy, n.principal());
        PolicyTree write = a.writePolicy.empty() ? ownerOnlyPolicy(n.principal())
                                                 : parsePolicy(a.writePolicy, n.principal());
        n.publish(parseScenarioName(a.nameText), actionContent(a.content), read, write);
        return;
    }
    case ScenarioAction::Kind::Update:
        node(a.device).update(parseScenarioName(a.nameText), actionContent(a.content));
        return;
    case ScenarioAction::Kind::Get:
        node(a.device).requestGet(parseScenarioName(a.nameText));
        return;
    case ScenarioAction::Kind::Replicate:
        node(a.device).replicate(parseScenarioName(a.nameText));
        return;
    case ScenarioAction::Kind::ReplicateCmd:
    case ScenarioAction::Kind::UnreplicateCmd: {
        Node& issuer = node(a.device);
        auto dot = a.targetDevice.find('.');
        if (dot == std::string::npos)
            fail(Errc::UnknownNode, a.targetDevice);
        Name deviceName{resolver_.at(a.targetDevice.substr(0, dot)),
                        {"dev", a.targetDevice.substr(dot + 1)}, std::nullopt, std::nullopt};
        issuer.issueCommand(deviceName,
                            a.kind == ScenarioAction::Kind::ReplicateCmd ? CommandOp::Replicate
                                                                         : CommandOp::Unreplicate,
                            parseScenarioName(a.nameText));
        return;
    }
    case ScenarioAction::Kind::Announce:
        node(a.device).announcePrefix(parsePrefix(a.nameText, resolver_));
        return;
    case ScenarioAction::Kind::AnnouncePrefixes: {
        Node& n = node(a.device);
        for (int j = 0; j < a.count; ++j)
            n.announcePrefix(Prefix{n.principal(), {"p" + std::to_string(j)}});
        return;
    }
    case ScenarioAction::Kind::Rekey: {
        // every owner device re-derives the identical next keyring from MK;
        // the new public key spreads out of band (it is public material)
        AbePublicKey pk;
        for (const auto& leaf : scenario_.graph.devices.at(a.owner)) {
            Node& n = node(a.owner + "." + leaf);
            n.rekey();
            pk = n.keyring()->publicKey;
        }
        for (auto& [id, n] : nodes_)
            n->installAbePublicKey(pk);
        return;
    }
    case ScenarioAction::Kind::Issue: {
        const auto& leaves = scenario_.graph.devices.at(a.owner);
        if (leaves.empty())
            fail(Errc::UnknownNode, a.owner);
        Node& ownerNode = node(a.owner + "." + leaves.front());
        AttributeSet attrs;
        for (const auto& s : a.attrs)
            attrs.insert(Attribute{s, resolver_.at(a.owner)});
        AttributeSecretKey sk = ownerNode.issueAttributeKey(attrs, resolver_.at(a.holder));
        for (const auto& leaf : scenario_.graph.devices.at(a.holder))
            node(a.holder + "." + leaf).installAttributeKey(sk);
        return;
    }
    case ScenarioAction::Kind::Revoke:
        node(a.device).revokeIdentity();
        return;
    case ScenarioAction::Kind::Resolve:
        node(a.device).resolveConflict(parseScenarioName(a.nameText), a.alternative);
        return;
    case ScenarioAction::Kind::Down:
    case ScenarioAction::Kind::Partition:
    case ScenarioAction::Kind::Loss:
        return; // scheduled as fault events at setup
    }
}

void Simulation::execute(const Event& e)
{
    switch (e.kind) {
    case Event::Kind::Deliver: {
        if (frameBlocked(e.from, e.to)) {
            ++framesDropped_;
            return;
        }
        ++framesDelivered_;
        if (!isMaintenance(e))
            lastActivity_ = now_;
        nodes_.at(e.to)->onFrame(e.from, e.frame);
        return;
    }
    case Event::Kind::Wake:
        if (downNodes_.count(e.to))
            return; // a dead node's timers die with it
        nodes_.at(e.to)->onWake(e.wakeToken);
        return;
    case Event::Kind::NodeDown:
        downNodes_.insert(e.to);
        lastActivity_ = now_;
        return;
    case Event::Kind::NodeUp:
        downNodes_.erase(e.to);
        lastActivity_ = now_;
        nodes_.at(e.to)->restart();
        return;
    case Event::Kind::PartitionStart:
        partitions_[e.index] = partitionDecls_.at(e.index);
        lastActivity_ = now_;
        return;
    case Event::Kind::PartitionEnd:
        partitions_.erase(e.index);
        lastActivity_ = now_;
        return;
    case Event::Kind::LossStart:
        lossRate_ = e.rate;
        lastActivity_ = now_;
        return;
    case Event::Kind::LossEnd:
        lossRate_ = 0;
        lastActivity_ = now_;
        return;
    case Event::Kind::UserAction:
        lastActivity_ = now_;
        runUserAction(scenario_.actions.at(e.index));
        return;
    }
}

TraceReport Simulation::run()
{
    TraceReport report;
    report.scenario = scenario_.name;
    report.seed = seed_;

    const std::int64_t timeLimit =
        scenario_.runUntil ? *scenario_.runUntil : scenario_.config.timeLimitMs;

    auto anyPendingWork = [&] {
        for (const auto& [id, n] : nodes_)
            if (n->hasPendingWork())
                return true;
        return false;
    };

    while (!queue_.empty()) {
        auto it = queue_.begin();
        std::int64_t t = it->first.first;
        if (pendingProtocol_ == 0 && t - lastActivity_ >= scenario_.config.quiescenceWindowMs &&
            !anyPendingWork()) {
            report.quiescent = true;
            break;
        }
        if (t > timeLimit) {
            report.timedOut = !scenario_.runUntil.has_value();
            report.quiescent = pendingProtocol_ == 0 && !anyPendingWork();
            break;
        }
        Event e = std::move(it->second);
        if (!isMaintenance(e))
            --pendingProtocol_;
        queue_.erase(it);
        now_ = t;
        ++eventsProcessed_;
        execute(e);
    }
    if (queue_.empty())
        report.quiescent = pendingProtocol_ == 0 && !anyPendingWork();

    report.endTimeMs = now_;
    report.eventsProcessed = eventsProcessed_;
    report.framesDelivered = framesDelivered_;
    report.framesDropped = framesDropped_;
    report.coherenceViolations = coherenceViolations_;
    report.coherenceDetails = coherenceDetails_;
    for (const auto& [id, n] : nodes_)
        report.nodes.push_back(buildNodeReport(*n));
    for (const auto& est : scenario_.estimates) {
        double people = std::pow(static_cast<double>(est.branching), est.k);
        double entries = people * est.prefixes;
        double bytes = entries * static_cast<double>(est.entryBytes);
        char line[256];
        std::snprintf(line, sizeof line,
                      "fib k=%d branching=%d prefixes=%d entry_bytes=%zu -> people=%.0f "
                      "entries=%.0f bytes=%.0f (%.2f MB)",
                      est.k, est.branching, est.prefixes, est.entryBytes, people, entries, bytes,
                      bytes / 1e6);
        report.estimateLines.push_back(line);
    }
    evaluateExpectations(report);
    return report;
}

// ---------------------------------------------------------------------------
// Reports

NodeReport Simulation::buildNodeReport(const Node& n) const
{
    NodeReport r;
    r.id = n.id();
    r.metrics = n.router().metrics();
    r.fibEntries = n.router().fibEntryCount();
    r.fibBytes = n.router().fibByteSize(scenario_.config.fibEntryAccountingBytes);
    r.cacheSize = n.router().store().cacheSize();
    r.repoSize = n.router().store().repoSize();
    r.pitSize = n.router().pitSize();
    r.writeRejections = n.writeRejections();
    for (const auto& [name, rep] : n.replicas()) {
        ReplicaReport rr;
        rr.name = render(name);
        rr.version = rep.currentVersion;
        rr.vv = rep.vv.str();
        rr.state = rep.state;
        rr.alternatives = rep.alternatives.size();
        rr.contentHash = toHex(BytesView(crypto::sha256(rep.envelopeWire)));
        r.replicas.push_back(std::move(rr));
    }
    for (const auto& g : n.gets()) {
        GetReport gr;
        gr.name = render(g.name);
        gr.satisfied = g.satisfied;
        gr.decrypted = g.decrypted;
        gr.error = g.error;
        if (g.decrypted)
            gr.plaintextHash = toHex(BytesView(g.plaintextHash));
        r.gets.push_back(std::move(gr));
    }
    for (const auto& c : n.directoryConflicts())
        r.directoryConflicts.push_back(
            render(c.directory) + " " + c.conflict.component + " " +
            (c.conflict.kind == DirConflictKind::NameConflict ? "name-conflict"
                                                              : "remove-update"));
    return r;
}

void Simulation::evaluateExpectations(TraceReport& report) const
{
    auto compare = [](double actual, const std::string& op, double want) {
        if (op == "==")
            return actual == want;
        if (op == "!=")
            return actual != want;
        if (op == ">=")
            return actual >= want;
        if (op == "<=")
            return actual <= want;
        if (op == ">")
            return actual > want;
        if (op == "<")
            return actual < want;
        return false;
    };

    for (const auto& e : scenario_.expectations) {
        double actual = 0;
        bool known = true;
        if (e.device.empty()) {
            if (e.metric == "quiescent")
                actual = report.quiescent ? 1 : 0;
            else if (e.metric == "coherence_violations")
                actual = static_cast<double>(report.coherenceViolations);
            else if (e.metric == "frames_delivered")
                actual = static_cast<double>(report.framesDelivered);
            else
                known = false;
        } else {
            const NodeReport* nr = nullptr;
            for (const auto& n : report.nodes)
                if (n.id == e.device)
                    nr = &n;
            if (!nr) {
                known = false;
            } else if (e.metric == "fib_entries") {
                actual = static_cast<double>(nr->fibEntries);
            } else if (e.metric == "fib_bytes") {
                actual = static_cast<double>(nr->fibBytes);
            } else if (e.metric == "replicas") {
                actual = static_cast<double>(nr->replicas.size());
            } else if (e.metric == "conflicted") {
                for (const auto& rr : nr->replicas)
                    if (rr.state == ReplicaState::Conflicted)
                        ++actual;
            } else if (e.metric == "gets_ok") {
                for (const auto& g : nr->gets)
                    if (g.satisfied && g.decrypted)
                        ++actual;
            } else if (e.metric == "gets_denied") {
                for (const auto& g : nr->gets)
                    if (g.satisfied && !g.decrypted)
                        ++actual;
            } else if (e.metric == "data_served_cache") {
                actual = static_cast<double>(nr->metrics.dataServedCache);
            } else if (e.metric == "data_served_repo") {
                actual = static_cast<double>(nr->metrics.dataServedRepo);
            } else if (e.metric == "write_rejections") {
                actual = static_cast<double>(nr->writeRejections);
            } else if (e.metric == "repo_size") {
                actual = static_cast<double>(nr->repoSize);
            } else {
                known = false;
            }
        }
        bool pass = known && compare(actual, e.op, e.value);
        std::string text = e.raw + " (actual " +
                           (known ? std::to_string(actual) : std::string("unknown")) + ")";
        report.assertions.push_back(AssertionResult{text, pass});
    }
}

std::string TraceReport::renderText() const
{
    std::ostringstream out;
    out << "pcn simulation report\n";
    out << "scenario: " << scenario << " seed: " << seed << "\n";
    out << "end_time_ms: " << endTimeMs << " quiescent: " << (quiescent ? "yes" : "no")
        << (timedOut ? " (time limit)" : "") << "\n";
    out << "events: " << eventsProcessed << " frames_delivered: " << framesDelivered
        << " frames_dropped: " << framesDropped << "\n";
    out << "coherence_violations: " << coherenceViolations << "\n";
    for (const auto& d : coherenceDetails)
        out << "  violation: " << d << "\n";
    for (const auto& n : nodes) {
        out << "node " << n.id << "\n";
        out << "  fib: entries=" << n.fibEntries << " bytes=" << n.fibBytes << "\n";
        out << "  store: cache=" << n.cacheSize << " repo=" << n.repoSize
            << " pit=" << n.pitSize << "\n";
        const auto& m = n.metrics;
        out << "  metrics: interests_in=" << m.interestsIn << " interests_out=" << m.interestsOut
            << " data_in=" << m.dataIn << " served_cache=" << m.dataServedCache
            << " served_repo=" << m.dataServedRepo << " bad_sig_drops="
            << m.dataDroppedBadSignature << " stale_drops=" << m.dataDroppedStale
            << " ann_accepted=" << m.announcementsAccepted << " cache_invalidations="
            << m.cacheInvalidations << "\n";
        if (!m.announcementsRejected.empty()) {
            out << "  announcements_rejected:";
            for (const auto& [reason, count] : m.announcementsRejected)
                out << " " << reason << "=" << count;
            out << "\n";
        }
        if (n.writeRejections)
            out << "  write_rejections: " << n.writeRejections << "\n";
        for (const auto& r : n.replicas)
            out << "  replica " << r.name << " v" << r.version << " vv=" << r.vv << " state="
                << replicaStateName(r.state) << " alts=" << r.alternatives << " hash="
                << r.contentHash.substr(0, 16) << "\n";
        for (const auto& g : n.gets)
            out << "  get " << g.name << " -> "
                << (!g.satisfied ? "pending" : g.decrypted ? "ok " + g.plaintextHash.substr(0, 16)
                                                           : "denied: " + g.error)
                << "\n";
        for (const auto& c : n.directoryConflicts)
            out << "  dir-conflict " << c << "\n";
    }
    for (const auto& line : estimateLines)
        out << "estimate " << line << "\n";
    for (const auto& a : assertions)
        out << (a.passed ? "PASS " : "FAIL ") << a.text << "\n";
    return out.str();
}

std::string TraceReport::renderJson() const
{
    nlohmann::json j;
    j["scenario"] = scenario;
    j["seed"] = seed;
    j["end_time_ms"] = endTimeMs;
    j["quiescent"] = quiescent;
    j["timed_out"] = timedOut;
    j["events"] = eventsProcessed;
    j["frames_delivered"] = framesDelivered;
    j["frames_dropped"] = framesDropped;
    j["coherence_violations"] = coherenceViolations;
    j["nodes"] = nlohmann::json::array();
    for (const auto& n : nodes) {
        nlohmann::json nj;
        nj["id"] = n.id;
        nj["fib_entries"] = n.fibEntries;
        nj["fib_bytes"] = n.fibBytes;
        nj["cache"] = n.cacheSize;
        nj["repo"] = n.repoSize;
        nj["metrics"] = {{"interests_in", n.metrics.interestsIn},
                         {"interests_out", n.metrics.interestsOut},
                         {"data_in", n.metrics.dataIn},
                         {"served_cache", n.metrics.dataServedCache},
                         {"served_repo", n.metrics.dataServedRepo},
                         {"bad_sig_drops", n.metrics.dataDroppedBadSignature},
                         {"ann_accepted", n.metrics.announcementsAccepted},
                         {"cache_invalidations", n.metrics.cacheInvalidations}};
        nj["announcements_rejected"] = n.metrics.announcementsRejected;
        nj["replicas"] = nlohmann::json::array();
        for (const auto& r : n.replicas)
            nj["replicas"].push_back({{"name", r.name},
                                      {"version", r.version},
                                      {"vv", r.vv},
                                      {"state", replicaStateName(r.state)},
                                      {"alternatives", r.alternatives},
                                      {"hash", r.contentHash}});
        nj["gets"] = nlohmann::json::array();
        for (const auto& g : n.gets)
            nj["gets"].push_back({{"name", g.name},
                                  {"satisfied", g.satisfied},
                                  {"decrypted", g.decrypted},
                                  {"error", g.error},
                                  {"hash", g.plaintextHash}});
        j["nodes"].push_back(std::move(nj));
    }
    j["estimates"] = estimateLines;
    j["assertions"] = nlohmann::json::array();
    for (const auto& a : assertions)
        j["assertions"].push_back({{"text", a.text}, {"passed", a.passed}});
    return j.dump(2);
}

TraceReport runScenario(const Scenario& scenario, std::uint64_t seed)
{
    Simulation sim(scenario, seed);
    return sim.run();
}

} // namespace pcn
