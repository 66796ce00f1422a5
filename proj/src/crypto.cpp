#include "pcn/crypto.hpp"
#include "pcn/errors.hpp"

#include <sodium.h>

#include <mutex>

namespace pcn {

std::string toHex(BytesView b)
{
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(b.size() * 2);
    for (std::uint8_t v : b) {
        out.push_back(digits[v >> 4]);
        out.push_back(digits[v & 0xf]);
    }
    return out;
}

static int hexVal(char c)
{
    if (c >= '0' && c <= '9')
        return c - '0';
    if (c >= 'a' && c <= 'f')
        return c - 'a' + 10;
    if (c >= 'A' && c <= 'F')
        return c - 'A' + 10;
    return -1;
}

Bytes fromHex(std::string_view hex)
{
    if (hex.size() % 2 != 0)
        fail(Errc::MalformedEncoding, "odd hex length");
    Bytes out;
    out.reserve(hex.size() / 2);
    for (std::size_t i = 0; i < hex.size(); i += 2) {
        int hi = hexVal(hex[i]);
        int lo = hexVal(hex[i + 1]);
        if (hi < 0 || lo < 0)
            fail(Errc::MalformedEncoding, "bad hex digit");
        out.push_back(static_cast<std::uint8_t>(hi << 4 | lo));
    }
    return out;
}

void ByteWriter::blob16(BytesView b)
{
    if (b.size() > 0xffff)
        fail(Errc::ComponentTooLong, "blob exceeds 65535 bytes");
    u16(static_cast<std::uint16_t>(b.size()));
    raw(b);
}

void ByteWriter::blob32(BytesView b)
{
    if (b.size() > 0xffffffffull)
        fail(Errc::MalformedEncoding, "blob exceeds u32 range");
    u32(static_cast<std::uint32_t>(b.size()));
    raw(b);
}

void ByteReader::need(std::size_t n) const
{
    if (data_.size() - pos_ < n)
        fail(Errc::MalformedEncoding, "truncated input");
}

std::uint8_t ByteReader::u8()
{
    need(1);
    return data_[pos_++];
}

std::uint16_t ByteReader::u16()
{
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(data_[pos_] << 8 | data_[pos_ + 1]);
    pos_ += 2;
    return v;
}

std::uint32_t ByteReader::u32()
{
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
        v = v << 8 | data_[pos_ + i];
    pos_ += 4;
    return v;
}

std::uint64_t ByteReader::u64()
{
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v = v << 8 | data_[pos_ + i];
    pos_ += 8;
    return v;
}

Bytes ByteReader::raw(std::size_t n)
{
    need(n);
    Bytes out(data_.begin() + pos_, data_.begin() + pos_ + n);
    pos_ += n;
    return out;
}

Digest ByteReader::digest()
{
    need(32);
    Digest d;
    std::memcpy(d.data(), data_.data() + pos_, 32);
    pos_ += 32;
    return d;
}

Bytes ByteReader::blob16() { return raw(u16()); }
Bytes ByteReader::blob32() { return raw(u32()); }

std::string ByteReader::str16()
{
    Bytes b = blob16();
    return std::string(b.begin(), b.end());
}

void ByteReader::expectEnd() const
{
    if (!atEnd())
        fail(Errc::MalformedEncoding, "trailing bytes");
}

void Rng::fill(std::uint8_t* out, std::size_t n)
{
    std::size_t i = 0;
    while (i < n) {
        std::uint64_t v = nextU64();
        for (int b = 0; b < 8 && i < n; ++b, ++i)
            out[i] = static_cast<std::uint8_t>(v >> (8 * b));
    }
}

Bytes Rng::bytes(std::size_t n)
{
    Bytes out(n);
    if (n)
        fill(out.data(), n);
    return out;
}

std::array<std::uint8_t, 32> Rng::seed32()
{
    std::array<std::uint8_t, 32> out;
    fill(out.data(), out.size());
    return out;
}

std::uint64_t Rng::below(std::uint64_t bound)
{
    // rejection sampling to stay unbiased
    std::uint64_t limit = bound * ((~std::uint64_t{0}) / bound);
    std::uint64_t v;
    do {
        v = nextU64();
    } while (v >= limit);
    return v % bound;
}

std::uint64_t SystemRng::nextU64()
{
    crypto::init();
    std::uint64_t v;
    randombytes_buf(&v, sizeof(v));
    return v;
}

void SystemRng::fill(std::uint8_t* out, std::size_t n)
{
    crypto::init();
    randombytes_buf(out, n);
}

static std::uint64_t splitmix64(std::uint64_t& x)
{
    x += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

SeededRng::SeededRng(std::uint64_t seed)
{
    std::uint64_t x = seed;
    for (auto& s : s_)
        s = splitmix64(x);
}

static inline std::uint64_t rotl(std::uint64_t x, int k)
{
    return (x << k) | (x >> (64 - k));
}

std::uint64_t SeededRng::nextU64()
{
    std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

namespace crypto {

void init()
{
    static std::once_flag flag;
    std::call_once(flag, [] {
        if (sodium_init() < 0)
            throw std::runtime_error("libsodium init failed");
    });
}

Digest sha256(BytesView data)
{
    init();
    Digest d;
    crypto_hash_sha256(d.data(), data.data(), data.size());
    return d;
}

Digest sha256(const Bytes& data)
{
    return sha256(BytesView(data));
}

std::array<std::uint8_t, 32> kdf(BytesView key, BytesView context)
{
    init();
    std::array<std::uint8_t, 32> out;
    crypto_generichash(out.data(), out.size(), context.data(), context.size(), key.data(),
                       key.size());
    return out;
}

SigningKey SigningKey::generate(Rng& rng)
{
    return fromSeed(rng.seed32());
}

SigningKey SigningKey::fromSeed(const std::array<std::uint8_t, 32>& seed)
{
    init();
    SigningKey k;
    k.publicKey.resize(crypto_sign_PUBLICKEYBYTES);
    k.privateKey.resize(crypto_sign_SECRETKEYBYTES);
    crypto_sign_seed_keypair(k.publicKey.data(), k.privateKey.data(), seed.data());
    return k;
}

Bytes sign(const SigningKey& key, BytesView message)
{
    init();
    Bytes sig(crypto_sign_BYTES);
    crypto_sign_detached(sig.data(), nullptr, message.data(), message.size(),
                         key.privateKey.data());
    return sig;
}

bool verify(BytesView publicKey, BytesView message, BytesView signature)
{
    init();
    if (publicKey.size() != crypto_sign_PUBLICKEYBYTES || signature.size() != crypto_sign_BYTES)
        return false;
    return crypto_sign_verify_detached(signature.data(), message.data(), message.size(),
                                       publicKey.data()) == 0;
}

Bytes aeadSeal(const std::array<std::uint8_t, 32>& key, BytesView plaintext, Rng& rng)
{
    init();
    Bytes out(kAeadNonceBytes + plaintext.size() + kAeadTagBytes);
    rng.fill(out.data(), kAeadNonceBytes);
    unsigned long long clen = 0;
    crypto_aead_xchacha20poly1305_ietf_encrypt(out.data() + kAeadNonceBytes, &clen,
                                               plaintext.data(), plaintext.size(), nullptr, 0,
                                               nullptr, out.data(), key.data());
    out.resize(kAeadNonceBytes + clen);
    return out;
}

std::optional<Bytes> aeadOpen(const std::array<std::uint8_t, 32>& key, BytesView sealed)
{
    init();
    if (sealed.size() < kAeadNonceBytes + kAeadTagBytes)
        return std::nullopt;
    Bytes out(sealed.size() - kAeadNonceBytes - kAeadTagBytes);
    unsigned long long mlen = 0;
    if (crypto_aead_xchacha20poly1305_ietf_decrypt(out.data(), &mlen, nullptr,
                                                   sealed.data() + kAeadNonceBytes,
                                                   sealed.size() - kAeadNonceBytes, nullptr, 0,
                                                   sealed.data(), key.data()) != 0)
        return std::nullopt;
    out.resize(mlen);
    return out;
}

std::array<std::uint8_t, 32> dhClampScalar(std::array<std::uint8_t, 32> raw)
{
    raw[0] &= 248;
    raw[31] &= 127;
    raw[31] |= 64;
    return raw;
}

std::array<std::uint8_t, 32> dhBasePoint(const std::array<std::uint8_t, 32>& scalar)
{
    init();
    std::array<std::uint8_t, 32> point;
    crypto_scalarmult_base(point.data(), scalar.data());
    return point;
}

std::optional<std::array<std::uint8_t, 32>> dhShared(const std::array<std::uint8_t, 32>& scalar,
                                                     const std::array<std::uint8_t, 32>& point)
{
    init();
    std::array<std::uint8_t, 32> out;
    if (crypto_scalarmult(out.data(), scalar.data(), point.data()) != 0)
        return std::nullopt;
    return out;
}

} // namespace crypto
} // namespace pcn
