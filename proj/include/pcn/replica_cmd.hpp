#pragma once

#include "pcn/identity.hpp"
#include "pcn/naming.hpp"

#include <vector>

namespace pcn {

enum class CommandOp : std::uint8_t { Replicate = 0, Unreplicate = 1, Rekey = 2 };

const char* commandOpName(CommandOp op);

struct Command {
    CommandOp op = CommandOp::Replicate;
    Name target;
    std::int64_t issuedAt = 0;
    std::int64_t expiresAt = 0;

    friend bool operator==(const Command&, const Command&) = default;
};

/// Serialized remote replica commands written to a device's reserved
/// "<principal>/dev/<device>/.cmd" file. Only the namespace owner may write
/// it; the signature covers the whole command list.
struct CommandFile {
    std::vector<Command> commands; // sorted by issuedAt
    Bytes ownerSignature;
};

inline constexpr std::int64_t kCommandExpiryMs = 10 * 60'000;

Bytes encodeCommandFile(const CommandFile& file);
CommandFile decodeCommandFile(BytesView bytes);
Bytes commandFileSignedMessage(const CommandFile& file);
Digest commandHash(const Command& command);

/// True iff `deviceName` lies under the owner's "/dev" subtree.
bool isDeviceName(const Name& deviceName, const Digest& ownerKeyHash);

/// Append a command (issued_at = now, expires_at = now + expiryMs) and
/// re-sign. Throws NotOwner / NotDeviceName.
CommandFile appendCommand(const CommandFile& existing, const KeyPair& owner,
                          const Name& deviceName, CommandOp op, const Name& target,
                          std::int64_t now, std::int64_t expiryMs = kCommandExpiryMs);

bool verifyCommandFile(const CommandFile& file, BytesView ownerPublicKey);

/// Commands still fresh at `now`, in execution order: issued_at ascending,
/// ties broken by content hash so every arrival order executes identically.
/// Expired commands go to `skipped` when provided.
std::vector<Command> freshCommandsInOrder(const CommandFile& file, std::int64_t now,
                                          std::vector<Command>* skipped = nullptr);

} // namespace pcn
