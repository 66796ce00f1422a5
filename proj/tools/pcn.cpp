// pcn: command-line front end for the personal content networking library.
// Thin adapter by design: every subcommand maps onto public library calls.

#include <CLI11.hpp>
#include <json.hpp>

#include "pcn/repo.hpp"
#include "pcn/simnet.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace pcn;

namespace {

Bytes readFileBytes(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        fail(Errc::FetchFailed, "cannot read " + path.string());
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void writeFileBytes(const fs::path& path, BytesView bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        fail(Errc::FetchFailed, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

struct CliOptions {
    std::string repoPath = "pcn-repo";
    bool json = false;
};

int runInit(const CliOptions& opts, const std::string& label, const std::string& device)
{
    SystemRng rng;
    RepoDir repo = RepoDir::init(opts.repoPath, label, device, rng);
    if (opts.json) {
        nlohmann::json j;
        j["label"] = label;
        j["device"] = device;
        j["key_hash"] = toHex(BytesView(repo.identity().publicKeyHash()));
        std::cout << j.dump(2) << "\n";
    } else {
        std::cout << "initialized " << label << " (device " << device << ") key "
                  << toHex(BytesView(repo.identity().publicKeyHash())).substr(0, 16) << "...\n";
    }
    return 0;
}

int runIntro(const CliOptions& opts, const std::string& peerPath, unsigned choices,
             unsigned answerMine, unsigned answerPeer, unsigned expectMine, unsigned expectPeer)
{
    RepoDir mine = RepoDir::open(opts.repoPath);
    RepoDir theirs = RepoDir::open(peerPath);

    // both sides commit, then both reveal; tie broken by key-hash order
    SystemRng rng;
    InterlockGroup group = InterlockGroup::production();
    InterlockSession a(group, choices, rng);
    InterlockSession b(group, choices, rng);
    mpz_class ca = a.commit(answerMine);
    mpz_class cb = b.commit(answerPeer);
    bool mineFirst = mine.identity().publicKeyHash() < theirs.identity().publicKeyHash();
    if (mineFirst) {
        b.receive(ca);
        a.receive(cb);
    } else {
        a.receive(cb);
        b.receive(ca);
    }
    bool okA = a.verifyPeer(answerPeer, b.blind(), expectPeer);
    bool okB = b.verifyPeer(answerMine, a.blind(), expectMine);
    if (!okA || !okB) {
        std::cerr << "introduction failed: answers did not verify\n";
        return 1;
    }
    mine.addKnownPrincipal(theirs.label(), theirs.identity().publicKey());
    theirs.addKnownPrincipal(mine.label(), mine.identity().publicKey());
    std::cout << "introduced " << mine.label() << " <-> " << theirs.label() << "\n";
    return 0;
}

int runPublish(const CliOptions& opts, const std::string& path, const std::string& nameText,
               const std::string& readPolicy, const std::string& writePolicy)
{
    RepoDir repo = RepoDir::open(opts.repoPath);
    LoopbackEnv env;
    auto node = repo.makeNode(env);
    Name name = parseName(nameText, repo.resolver());
    Bytes content = readFileBytes(path);
    Principal self = node->principal();
    PolicyTree read =
        readPolicy.empty() ? ownerOnlyPolicy(self) : parsePolicy(readPolicy, self);
    PolicyTree write =
        writePolicy.empty() ? ownerOnlyPolicy(self) : parsePolicy(writePolicy, self);
    Name published = node->findReplica(name) ? node->update(name, content)
                                             : node->publish(name, content, read, write);
    repo.save(*node);
    if (opts.json) {
        nlohmann::json j;
        j["name"] = render(published);
        j["version"] = *published.version;
        std::cout << j.dump(2) << "\n";
    } else {
        std::cout << "published " << render(published) << "\n";
    }
    return 0;
}

int runGet(const CliOptions& opts, const std::string& nameText, const std::string& outPath)
{
    RepoDir repo = RepoDir::open(opts.repoPath);
    LoopbackEnv env;
    auto node = repo.makeNode(env);
    Name name = parseName(nameText, repo.resolver());
    std::string error;
    auto content = node->getLocal(name, &error);
    if (!content) {
        std::cerr << error << "\n";
        return 1;
    }
    if (outPath.empty() || outPath == "-")
        std::cout.write(reinterpret_cast<const char*>(content->data()),
                        static_cast<std::streamsize>(content->size()));
    else
        writeFileBytes(outPath, *content);
    return 0;
}

int runReplicate(const CliOptions& opts, const std::string& nameText, const std::string& device)
{
    RepoDir repo = RepoDir::open(opts.repoPath);
    LoopbackEnv env;
    auto node = repo.makeNode(env);
    Name target = parseName(nameText, repo.resolver());
    Name deviceName{node->principal(), {"dev", device}, std::nullopt, std::nullopt};
    node->issueCommand(deviceName, CommandOp::Replicate, target);
    repo.save(*node);
    std::cout << "replication command queued for " << render(deviceName) << "\n";
    return 0;
}

int runKeygen(const CliOptions& opts, const std::string& attrsCsv, const std::string& holder,
              const std::string& outPath)
{
    RepoDir repo = RepoDir::open(opts.repoPath);
    LoopbackEnv env;
    auto node = repo.makeNode(env);
    Resolver resolver = repo.resolver();
    auto holderIt = resolver.find(holder);
    if (holderIt == resolver.end())
        fail(Errc::UnknownPrincipal, holder);
    AttributeSet attrs;
    std::string cur;
    for (char c : attrsCsv + ",") {
        if (c == ',') {
            if (!cur.empty())
                attrs.insert(Attribute{cur, node->principal()});
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    AttributeSecretKey sk = node->issueAttributeKey(attrs, holderIt->second);
    repo.save(*node);
    Bytes encoded = encodeAttributeSecretKey(sk);
    if (outPath.empty()) {
        std::cout << toHex(encoded) << "\n";
    } else if (fs::is_directory(outPath) && RepoDir::exists(outPath)) {
        // drop straight into another local repo's keystore
        RepoDir target = RepoDir::open(outPath);
        target.addAttributeKey(sk);
        target.addAbePublicKey(node->keyring()->publicKey);
        std::cout << "issued key for " << holder << " into " << outPath << "\n";
    } else {
        writeFileBytes(outPath, encoded);
        std::cout << "issued key for " << holder << " to " << outPath << "\n";
    }
    return 0;
}

int runRekey(const CliOptions& opts)
{
    RepoDir repo = RepoDir::open(opts.repoPath);
    LoopbackEnv env;
    auto node = repo.makeNode(env);
    node->rekey();
    repo.save(*node);
    std::cout << "rekeyed to epoch " << node->keyring()->epoch << "\n";
    return 0;
}

int runRevokeIdentity(const CliOptions& opts)
{
    RepoDir repo = RepoDir::open(opts.repoPath);
    LoopbackEnv env;
    auto node = repo.makeNode(env);
    Digest old = node->principalKey().publicKeyHash();
    node->revokeIdentity();
    repo.save(*node);
    SystemRng rng;
    KeyPair next = KeyPair::generate(rng);
    repo.replaceIdentity(next);
    std::cout << "revoked " << toHex(BytesView(old)).substr(0, 16) << "..., new key "
              << toHex(BytesView(next.publicKeyHash())).substr(0, 16) << "...\n";
    return 0;
}

int runLs(const CliOptions& opts, const std::string& prefixText)
{
    RepoDir repo = RepoDir::open(opts.repoPath);
    LoopbackEnv env;
    auto node = repo.makeNode(env);
    Name dirName = parseName(prefixText, repo.resolver()).withoutVersion();
    std::string error;
    auto plain = node->getLocal(dirName, &error);
    if (!plain) {
        std::cerr << error << "\n";
        return 1;
    }
    if (!looksLikeDirectory(*plain)) {
        std::cerr << "not a directory\n";
        return 1;
    }
    DirectoryDoc doc = decodeDirectory(*plain);
    if (opts.json) {
        nlohmann::json j = nlohmann::json::array();
        for (const auto& component : doc.listing())
            j.push_back(component);
        std::cout << j.dump(2) << "\n";
    } else {
        for (const auto& component : doc.listing())
            std::cout << component << "\n";
    }
    return 0;
}

int runStatus(const CliOptions& opts)
{
    RepoDir repo = RepoDir::open(opts.repoPath);
    LoopbackEnv env;
    auto node = repo.makeNode(env);
    nlohmann::json j = nlohmann::json::array();
    for (const auto& [name, rep] : node->replicas()) {
        nlohmann::json entry;
        entry["name"] = render(name);
        entry["version"] = rep.currentVersion;
        entry["state"] = replicaStateName(rep.state);
        entry["vv"] = rep.vv.str();
        nlohmann::json holders = nlohmann::json::array();
        holders.push_back(node->id()); // this device holds it
        for (const auto& [device, count] : rep.vv.counters())
            if (device != node->id())
                holders.push_back(device); // devices that contributed updates
        entry["holders"] = holders;
        j.push_back(entry);
        if (!opts.json) {
            std::cout << render(name) << " v" << rep.currentVersion << " "
                      << replicaStateName(rep.state) << " vv=" << rep.vv.str() << " holders=";
            for (std::size_t i = 0; i < holders.size(); ++i)
                std::cout << (i ? "," : "") << holders[i].get<std::string>();
            std::cout << "\n";
        }
    }
    if (opts.json)
        std::cout << j.dump(2) << "\n";
    return 0;
}

int runSim(const CliOptions& opts, const std::string& scenarioPath, std::uint64_t seed,
           const std::string& reportPath)
{
    Scenario scenario = Scenario::parseFile(scenarioPath);
    TraceReport report = runScenario(scenario, seed);
    std::string text = opts.json ? report.renderJson() : report.renderText();
    if (reportPath.empty())
        std::cout << text;
    else
        writeFileBytes(reportPath, toBytes(text));
    return report.allAssertionsPassed() ? 0 : 1;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"pcn: personal content networking"};
    app.require_subcommand(1);
    CliOptions opts;
    app.add_option("--repo", opts.repoPath, "repository directory")->envname("PCN_REPO");
    app.add_flag("--json", opts.json, "machine-readable output");

    std::string label, device = "main";
    auto* cmdInit = app.add_subcommand("init", "create a namespace and key pair");
    cmdInit->add_option("label", label)->required();
    cmdInit->add_option("--device", device, "device name for this repository");

    std::string peerRepo;
    unsigned choices = 4, answerMine = 0, answerPeer = 0;
    int expectMine = -1, expectPeer = -1;
    auto* cmdIntro = app.add_subcommand("intro", "introduce two local repositories (interlock)");
    cmdIntro->add_option("peer", peerRepo, "peer repository directory")->required();
    cmdIntro->add_option("--choices", choices, "answer choices per question");
    cmdIntro->add_option("--answer", answerMine, "our answer to the peer's question");
    cmdIntro->add_option("--peer-answer", answerPeer, "peer's answer to our question");
    cmdIntro->add_option("--expect", expectMine, "answer we expect from the peer");
    cmdIntro->add_option("--peer-expect", expectPeer, "answer the peer expects from us");

    std::string pubPath, pubName, readPolicy, writePolicy;
    auto* cmdPublish = app.add_subcommand("publish", "encrypt and publish a file");
    cmdPublish->add_option("path", pubPath)->required();
    cmdPublish->add_option("name", pubName)->required();
    cmdPublish->add_option("--read-policy", readPolicy, "read-access policy");
    cmdPublish->add_option("--write-policy", writePolicy, "write-access policy");

    std::string getName, getOut;
    auto* cmdGet = app.add_subcommand("get", "fetch and decrypt a name");
    cmdGet->add_option("name", getName)->required();
    cmdGet->add_option("--out", getOut, "output file (default stdout)");

    std::string replName, replDevice;
    auto* cmdReplicate = app.add_subcommand("replicate", "queue a replication command");
    cmdReplicate->add_option("name", replName)->required();
    cmdReplicate->add_option("--device", replDevice)->required();

    std::string attrsCsv, holder, keyOut;
    auto* cmdKeygen = app.add_subcommand("keygen", "issue an attribute secret key");
    cmdKeygen->add_option("--attrs", attrsCsv)->required();
    cmdKeygen->add_option("--holder", holder)->required();
    cmdKeygen->add_option("--out", keyOut, "output file or peer repo directory");

    app.add_subcommand("rekey", "lazy revocation: advance the ABE epoch");
    app.add_subcommand("revoke-identity", "revoke the identity key and mint a new one");

    std::string lsPrefix;
    auto* cmdLs = app.add_subcommand("ls", "list a directory");
    cmdLs->add_option("prefix", lsPrefix)->required();

    app.add_subcommand("status", "replica status per file");

    auto* cmdSim = app.add_subcommand("sim", "simulator");
    std::string scenarioPath, reportPath;
    std::uint64_t seed = 1;
    auto* cmdSimRun = cmdSim->add_subcommand("run", "run a scenario");
    cmdSimRun->add_option("scenario", scenarioPath)->required();
    cmdSimRun->add_option("--seed", seed);
    cmdSimRun->add_option("--report", reportPath, "write the report to a file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2; // usage errors exit 2
    }

    try {
        if (cmdInit->parsed())
            return runInit(opts, label, device);
        if (cmdIntro->parsed())
            return runIntro(opts, peerRepo, choices, answerMine, answerPeer,
                            expectMine < 0 ? answerPeer : static_cast<unsigned>(expectMine),
                            expectPeer < 0 ? answerMine : static_cast<unsigned>(expectPeer));
        if (cmdPublish->parsed())
            return runPublish(opts, pubPath, pubName, readPolicy, writePolicy);
        if (cmdGet->parsed())
            return runGet(opts, getName, getOut);
        if (cmdReplicate->parsed())
            return runReplicate(opts, replName, replDevice);
        if (cmdKeygen->parsed())
            return runKeygen(opts, attrsCsv, holder, keyOut);
        if (app.get_subcommand("rekey")->parsed())
            return runRekey(opts);
        if (app.get_subcommand("revoke-identity")->parsed())
            return runRevokeIdentity(opts);
        if (cmdLs->parsed())
            return runLs(opts, lsPrefix);
        if (app.get_subcommand("status")->parsed())
            return runStatus(opts);
        if (cmdSim->parsed() && cmdSimRun->parsed())
            return runSim(opts, scenarioPath, seed, reportPath);
        std::cerr << "no subcommand\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
