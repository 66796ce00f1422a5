#pragma once

#include "pcn/bytes.hpp"

#include <cstdint>
#include <memory>
#include <optional>

namespace pcn {

/// Source of randomness. Protocol code draws all nonces, blinds and key seeds
/// through this interface so simulations can run fully deterministic.
class Rng {
public:
    virtual ~Rng() = default;
    virtual std::uint64_t nextU64() = 0;
    virtual void fill(std::uint8_t* out, std::size_t n);
    Bytes bytes(std::size_t n);
    std::array<std::uint8_t, 32> seed32();
    /// Uniform value in [0, bound). bound must be > 0.
    std::uint64_t below(std::uint64_t bound);
};

/// OS randomness (libsodium).
class SystemRng final : public Rng {
public:
    std::uint64_t nextU64() override;
    void fill(std::uint8_t* out, std::size_t n) override;
};

/// xoshiro256** seeded via splitmix64; deterministic across runs and platforms.
class SeededRng final : public Rng {
public:
    explicit SeededRng(std::uint64_t seed);
    std::uint64_t nextU64() override;

private:
    std::uint64_t s_[4];
};

namespace crypto {

void init(); // idempotent libsodium init

Digest sha256(BytesView data);
Digest sha256(const Bytes& data);

/// Keyed BLAKE2b; domain-separated key derivation.
std::array<std::uint8_t, 32> kdf(BytesView key, BytesView context);

enum class SigAlgorithm : std::uint8_t { Ed25519 = 1 };

struct SigningKey {
    Bytes publicKey;  // 32 bytes
    Bytes privateKey; // 64 bytes (ed25519 secret key)
    SigAlgorithm algorithm = SigAlgorithm::Ed25519;

    Digest publicKeyHash() const { return sha256(publicKey); }
    static SigningKey generate(Rng& rng);
    static SigningKey fromSeed(const std::array<std::uint8_t, 32>& seed);
};

Bytes sign(const SigningKey& key, BytesView message);
bool verify(BytesView publicKey, BytesView message, BytesView signature);

// Authenticated encryption (XChaCha20-Poly1305). Output = nonce || ciphertext+tag.
inline constexpr std::size_t kAeadKeyBytes = 32;
inline constexpr std::size_t kAeadNonceBytes = 24;
inline constexpr std::size_t kAeadTagBytes = 16;

Bytes aeadSeal(const std::array<std::uint8_t, 32>& key, BytesView plaintext, Rng& rng);
std::optional<Bytes> aeadOpen(const std::array<std::uint8_t, 32>& key, BytesView sealed);

// X25519 Diffie-Hellman for the attribute key encapsulation.
std::array<std::uint8_t, 32> dhClampScalar(std::array<std::uint8_t, 32> raw);
std::array<std::uint8_t, 32> dhBasePoint(const std::array<std::uint8_t, 32>& scalar);
std::optional<std::array<std::uint8_t, 32>> dhShared(const std::array<std::uint8_t, 32>& scalar,
                                                     const std::array<std::uint8_t, 32>& point);

} // namespace crypto
} // namespace pcn
