#pragma once

#include "pcn/node.hpp"

#include <filesystem>
#include <memory>

namespace pcn {

/// Host environment for a single local node driven by a CLI process: wall
/// clock, OS randomness, no transport.
class LoopbackEnv final : public NodeEnv {
public:
    std::int64_t now() override;
    Rng& rng() override { return rng_; }
    void sendFrame(const DeviceId&, const DeviceId&, Bytes) override {}
    void scheduleWake(const DeviceId&, std::int64_t, std::uint64_t) override {}

private:
    SystemRng rng_;
};

/// On-disk repository layout:
///   config.json            label, device
///   keystore/              identity + ABE keys, known principals, delegations
///                          (directory 0700, files 0600)
///   repository/            one file per stored data packet
///   replicas.bin           replica table (versions, version vectors, state)
///   logs/received_prefix   the device's announcement log
class RepoDir {
public:
    static RepoDir init(const std::filesystem::path& root, const std::string& label,
                        const std::string& deviceLeaf, Rng& rng);
    static RepoDir open(const std::filesystem::path& root);
    static bool exists(const std::filesystem::path& root);

    /// Build a node over this repository's persisted state.
    std::unique_ptr<Node> makeNode(NodeEnv& env) const;
    /// Persist the node's state back to disk.
    void save(const Node& node);

    void addKnownPrincipal(const std::string& label, const Bytes& publicKey);
    void addAttributeKey(const AttributeSecretKey& sk);
    void addAbePublicKey(const AbePublicKey& pk);
    void addDelegation(const DelegationCert& cert);
    /// Replace the identity key pair (identity revocation).
    void replaceIdentity(const KeyPair& next);

    const std::filesystem::path& root() const { return root_; }
    const std::string& label() const { return label_; }
    const std::string& deviceLeaf() const { return deviceLeaf_; }
    const KeyPair& identity() const { return identity_; }
    Resolver resolver() const;

private:
    RepoDir() = default;
    void loadAll();

    std::filesystem::path root_;
    std::string label_;
    std::string deviceLeaf_;
    KeyPair identity_;
    std::optional<AbeKeyring> keyring_;
    std::map<std::string, Bytes> knownPrincipals_; // label -> public key
    std::vector<AttributeSecretKey> attributeKeys_;
    std::vector<AbePublicKey> abePublicKeys_;
    std::vector<DelegationCert> delegations_;
};

} // namespace pcn
