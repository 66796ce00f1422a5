#include "pcn/replica_cmd.hpp"
#include "pcn/crypto.hpp"
#include "pcn/wire.hpp"

#include <algorithm>

namespace pcn {

const char* commandOpName(CommandOp op)
{
    switch (op) {
    case CommandOp::Replicate: return "Replicate";
    case CommandOp::Unreplicate: return "Unreplicate";
    case CommandOp::Rekey: return "Rekey";
    }
    return "?";
}

namespace {

void encodeCommand(ByteWriter& w, const Command& c)
{
    w.u8(static_cast<std::uint8_t>(c.op));
    canonicalEncode(w, c.target);
    w.i64(c.issuedAt);
    w.i64(c.expiresAt);
}

Command decodeCommand(ByteReader& r)
{
    Command c;
    std::uint8_t op = r.u8();
    if (op > 2)
        fail(Errc::MalformedEncoding, "unknown command op");
    c.op = static_cast<CommandOp>(op);
    c.target = canonicalDecode(r);
    c.issuedAt = r.i64();
    c.expiresAt = r.i64();
    return c;
}

} // namespace

Bytes commandFileSignedMessage(const CommandFile& file)
{
    ByteWriter w;
    w.u8(wire::kTagCommandFile);
    w.u16(static_cast<std::uint16_t>(file.commands.size()));
    for (const auto& c : file.commands)
        encodeCommand(w, c);
    return w.take();
}

Bytes encodeCommandFile(const CommandFile& file)
{
    ByteWriter w;
    w.raw(commandFileSignedMessage(file));
    w.blob16(file.ownerSignature);
    return w.take();
}

CommandFile decodeCommandFile(BytesView bytes)
{
    ByteReader r(bytes);
    if (r.u8() != wire::kTagCommandFile)
        fail(Errc::MalformedEncoding, "not a command file");
    CommandFile file;
    std::uint16_t count = r.u16();
    for (std::uint16_t i = 0; i < count; ++i)
        file.commands.push_back(decodeCommand(r));
    file.ownerSignature = r.blob16();
    r.expectEnd();
    return file;
}

Digest commandHash(const Command& command)
{
    ByteWriter w;
    encodeCommand(w, command);
    return crypto::sha256(w.bytes());
}

bool isDeviceName(const Name& deviceName, const Digest& ownerKeyHash)
{
    return deviceName.principal.publicKeyHash == ownerKeyHash &&
           deviceName.components.size() >= 2 && deviceName.components[0] == "dev";
}

CommandFile appendCommand(const CommandFile& existing, const KeyPair& owner,
                          const Name& deviceName, CommandOp op, const Name& target,
                          std::int64_t now, std::int64_t expiryMs)
{
    if (deviceName.principal.publicKeyHash != owner.publicKeyHash())
        fail(Errc::NotOwner, render(deviceName));
    if (!isDeviceName(deviceName, owner.publicKeyHash()))
        fail(Errc::NotDeviceName, render(deviceName));

    CommandFile file = existing;
    file.commands.push_back(Command{op, target, now, now + expiryMs});
    std::stable_sort(file.commands.begin(), file.commands.end(),
                     [](const Command& a, const Command& b) { return a.issuedAt < b.issuedAt; });
    file.ownerSignature = crypto::sign(owner.key, commandFileSignedMessage(file));
    return file;
}

bool verifyCommandFile(const CommandFile& file, BytesView ownerPublicKey)
{
    return crypto::verify(ownerPublicKey, commandFileSignedMessage(file), file.ownerSignature);
}

std::vector<Command> freshCommandsInOrder(const CommandFile& file, std::int64_t now,
                                          std::vector<Command>* skipped)
{
    std::vector<Command> fresh;
    for (const auto& c : file.commands) {
        if (c.expiresAt >= now)
            fresh.push_back(c);
        else if (skipped)
            skipped->push_back(c);
    }
    std::sort(fresh.begin(), fresh.end(), [](const Command& a, const Command& b) {
        if (a.issuedAt != b.issuedAt)
            return a.issuedAt < b.issuedAt;
        return commandHash(a) < commandHash(b);
    });
    return fresh;
}

} // namespace pcn
