#include "pcn/repo.hpp"

#include <json.hpp>

#include <chrono>
#include <fstream>

namespace pcn {

namespace fs = std::filesystem;

std::int64_t LoopbackEnv::now()
{
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

namespace {

void writeFile(const fs::path& path, BytesView bytes, bool restrict = false)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        fail(Errc::FetchFailed, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.close();
    if (restrict)
        fs::permissions(path, fs::perms::owner_read | fs::perms::owner_write,
                        fs::perm_options::replace);
}

Bytes readFile(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        fail(Errc::FetchFailed, "cannot read " + path.string());
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

Bytes encodeIdentity(const KeyPair& key)
{
    ByteWriter w;
    w.u8(static_cast<std::uint8_t>(key.key.algorithm));
    w.blob16(key.key.publicKey);
    w.blob16(key.key.privateKey);
    return w.take();
}

KeyPair decodeIdentity(BytesView bytes)
{
    ByteReader r(bytes);
    KeyPair k;
    k.key.algorithm = static_cast<crypto::SigAlgorithm>(r.u8());
    k.key.publicKey = r.blob16();
    k.key.privateKey = r.blob16();
    r.expectEnd();
    return k;
}

Bytes encodeKeyring(const AbeKeyring& kr)
{
    ByteWriter w;
    w.raw(kr.owner.publicKeyHash);
    w.u32(kr.epoch);
    w.u8(kr.masterKey ? 1 : 0);
    if (kr.masterKey)
        w.raw(*kr.masterKey);
    w.blob32(encodeAbePublicKey(kr.publicKey));
    return w.take();
}

AbeKeyring decodeKeyring(BytesView bytes, const std::string& label)
{
    ByteReader r(bytes);
    AbeKeyring kr;
    kr.owner.publicKeyHash = r.digest();
    kr.owner.displayLabel = label;
    kr.epoch = r.u32();
    if (r.u8())
        kr.masterKey = r.digest();
    kr.publicKey = decodeAbePublicKey(r.blob32());
    r.expectEnd();
    return kr;
}

Bytes encodeReplica(const Replica& rep)
{
    ByteWriter w;
    canonicalEncode(w, rep.name);
    w.i64(rep.currentVersion);
    encodeVv(w, rep.vv);
    w.u8(static_cast<std::uint8_t>(rep.state));
    w.blob32(rep.envelopeWire);
    w.u32(static_cast<std::uint32_t>(rep.history.size()));
    for (const auto& h : rep.history) {
        w.raw(h.author);
        w.i64(h.timestamp);
        w.i64(h.version);
        w.raw(h.contentHash);
    }
    w.u32(static_cast<std::uint32_t>(rep.alternatives.size()));
    for (const auto& a : rep.alternatives) {
        w.i64(a.version);
        encodeVv(w, a.vv);
        w.blob32(a.envelopeWire);
    }
    return w.take();
}

Replica decodeReplica(ByteReader& r)
{
    Replica rep;
    rep.name = canonicalDecode(r);
    rep.currentVersion = r.i64();
    rep.vv = decodeVv(r);
    rep.state = static_cast<ReplicaState>(r.u8());
    rep.envelopeWire = r.blob32();
    std::uint32_t historyCount = r.u32();
    for (std::uint32_t i = 0; i < historyCount; ++i) {
        RevisionRecord rec;
        rec.author = r.digest();
        rec.timestamp = r.i64();
        rec.version = r.i64();
        rec.contentHash = r.digest();
        rep.history.push_back(rec);
    }
    std::uint32_t altCount = r.u32();
    for (std::uint32_t i = 0; i < altCount; ++i) {
        ConflictAlternative alt;
        alt.version = r.i64();
        alt.vv = decodeVv(r);
        alt.envelopeWire = r.blob32();
        rep.alternatives.push_back(std::move(alt));
    }
    return rep;
}

} // namespace

bool RepoDir::exists(const fs::path& root)
{
    return fs::exists(root / "config.json");
}

RepoDir RepoDir::init(const fs::path& root, const std::string& label,
                      const std::string& deviceLeaf, Rng& rng)
{
    if (exists(root))
        fail(Errc::FetchFailed, "repository already initialized: " + root.string());
    fs::create_directories(root / "keystore" / "known");
    fs::create_directories(root / "keystore" / "attrkeys");
    fs::create_directories(root / "keystore" / "pks");
    fs::create_directories(root / "keystore" / "delegations");
    fs::create_directories(root / "repository");
    fs::create_directories(root / "logs");
    fs::permissions(root / "keystore",
                    fs::perms::owner_read | fs::perms::owner_write | fs::perms::owner_exec,
                    fs::perm_options::replace);

    RepoDir repo;
    repo.root_ = root;
    repo.label_ = label;
    repo.deviceLeaf_ = deviceLeaf;
    repo.identity_ = KeyPair::generate(rng);
    repo.keyring_ = abeSetup(repo.identity_.principal(label), {}, rng);

    nlohmann::json config;
    config["label"] = label;
    config["device"] = deviceLeaf;
    std::string configText = config.dump(2);
    writeFile(root / "config.json", toBytes(configText));
    writeFile(root / "keystore" / "identity.key", encodeIdentity(repo.identity_), true);
    writeFile(root / "keystore" / "abe.keyring", encodeKeyring(*repo.keyring_), true);
    return repo;
}

RepoDir RepoDir::open(const fs::path& root)
{
    if (!exists(root))
        fail(Errc::FetchFailed, "no repository at " + root.string());
    RepoDir repo;
    repo.root_ = root;
    auto configBytes = readFile(root / "config.json");
    auto config = nlohmann::json::parse(toString(configBytes));
    repo.label_ = config.at("label").get<std::string>();
    repo.deviceLeaf_ = config.at("device").get<std::string>();
    repo.identity_ = decodeIdentity(readFile(root / "keystore" / "identity.key"));
    repo.keyring_ = decodeKeyring(readFile(root / "keystore" / "abe.keyring"), repo.label_);
    repo.loadAll();
    return repo;
}

void RepoDir::loadAll()
{
    for (const auto& entry : fs::directory_iterator(root_ / "keystore" / "known"))
        knownPrincipals_[entry.path().stem().string()] = readFile(entry.path());
    std::vector<fs::path> paths;
    auto sortedPaths = [&](const fs::path& dir) {
        paths.clear();
        for (const auto& entry : fs::directory_iterator(dir))
            paths.push_back(entry.path());
        std::sort(paths.begin(), paths.end());
        return paths;
    };
    for (const auto& p : sortedPaths(root_ / "keystore" / "attrkeys"))
        attributeKeys_.push_back(decodeAttributeSecretKey(readFile(p)));
    for (const auto& p : sortedPaths(root_ / "keystore" / "pks"))
        abePublicKeys_.push_back(decodeAbePublicKey(readFile(p)));
    for (const auto& p : sortedPaths(root_ / "keystore" / "delegations"))
        delegations_.push_back(wire::decodeDelegationCert(BytesView(readFile(p))));
}

Resolver RepoDir::resolver() const
{
    Resolver r;
    r[label_] = identity_.principal(label_);
    for (const auto& [label, key] : knownPrincipals_)
        r[label] = Principal{crypto::sha256(key), label};
    return r;
}

std::unique_ptr<Node> RepoDir::makeNode(NodeEnv& env) const
{
    auto node = std::make_unique<Node>(label_ + "." + deviceLeaf_, label_, identity_, env);
    if (keyring_)
        node->installKeyring(*keyring_);
    for (const auto& [label, key] : knownPrincipals_)
        node->addKnownPrincipal(label, key);
    for (const auto& sk : attributeKeys_)
        node->installAttributeKey(sk);
    for (const auto& pk : abePublicKeys_)
        node->installAbePublicKey(pk);
    for (const auto& cert : delegations_)
        node->installDelegation(cert);

    if (fs::exists(root_ / "replicas.bin")) {
        Bytes bytes = readFile(root_ / "replicas.bin");
        ByteReader r(bytes);
        std::uint32_t count = r.u32();
        for (std::uint32_t i = 0; i < count; ++i)
            node->restoreReplica(decodeReplica(r));
    }
    for (const auto& entry : fs::directory_iterator(root_ / "repository")) {
        DataPacket packet = decodeData(BytesView(readFile(entry.path())));
        node->restoreClock(packet.name.version.value_or(0));
        node->router().store().repoInsert(packet, packet.name.principal.publicKeyHash);
    }
    if (fs::exists(root_ / "logs" / "received_prefix"))
        node->restorePrefixLog(decodePrefixLog(readFile(root_ / "logs" / "received_prefix")));
    return node;
}

void RepoDir::save(const Node& node)
{
    ByteWriter w;
    w.u32(static_cast<std::uint32_t>(node.replicas().size()));
    for (const auto& [name, rep] : node.replicas())
        w.raw(encodeReplica(rep));
    writeFile(root_ / "replicas.bin", w.bytes());

    node.router().store().forEachRepo([&](const Name& name, const DataPacket& packet) {
        Digest h = crypto::sha256(canonicalEncode(name));
        writeFile(root_ / "repository" / (toHex(BytesView(h)) + ".pkt"), encodeData(packet));
    });
    writeFile(root_ / "logs" / "received_prefix", encodePrefixLog(node.prefixLog()));
    if (node.keyring()) {
        keyring_ = *node.keyring();
        writeFile(root_ / "keystore" / "abe.keyring", encodeKeyring(*keyring_), true);
    }
}

void RepoDir::addKnownPrincipal(const std::string& label, const Bytes& publicKey)
{
    knownPrincipals_[label] = publicKey;
    writeFile(root_ / "keystore" / "known" / (label + ".pub"), publicKey, true);
}

void RepoDir::addAttributeKey(const AttributeSecretKey& sk)
{
    attributeKeys_.push_back(sk);
    writeFile(root_ / "keystore" / "attrkeys" /
                  (std::to_string(attributeKeys_.size()) + ".ask"),
              encodeAttributeSecretKey(sk), true);
}

void RepoDir::addAbePublicKey(const AbePublicKey& pk)
{
    abePublicKeys_.push_back(pk);
    writeFile(root_ / "keystore" / "pks" / (std::to_string(abePublicKeys_.size()) + ".pk"),
              encodeAbePublicKey(pk), true);
}

void RepoDir::addDelegation(const DelegationCert& cert)
{
    delegations_.push_back(cert);
    writeFile(root_ / "keystore" / "delegations" /
                  (std::to_string(delegations_.size()) + ".cert"),
              wire::encodeDelegationCert(cert), true);
}

void RepoDir::replaceIdentity(const KeyPair& next)
{
    identity_ = next;
    writeFile(root_ / "keystore" / "identity.key", encodeIdentity(identity_), true);
}

} // namespace pcn
