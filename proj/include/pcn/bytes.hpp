#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pcn {

using Bytes = std::vector<std::uint8_t>;
using BytesView = std::span<const std::uint8_t>;
using Digest = std::array<std::uint8_t, 32>;

inline Bytes toBytes(std::string_view s)
{
    return Bytes(s.begin(), s.end());
}

inline std::string toString(BytesView b)
{
    return std::string(b.begin(), b.end());
}

std::string toHex(BytesView b);
Bytes fromHex(std::string_view hex); // throws Error(MalformedEncoding) on bad input

/// Big-endian append-only encoder for the canonical wire formats.
class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v)
    {
        buf_.push_back(static_cast<std::uint8_t>(v >> 8));
        buf_.push_back(static_cast<std::uint8_t>(v));
    }
    void u32(std::uint32_t v)
    {
        for (int i = 3; i >= 0; --i)
            buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v)
    {
        for (int i = 7; i >= 0; --i)
            buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
    void raw(BytesView b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
    void raw(const Bytes& b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
    void raw(const Digest& d) { buf_.insert(buf_.end(), d.begin(), d.end()); }
    void blob16(BytesView b); // u16 length prefix; throws if > 65535
    void blob32(BytesView b); // u32 length prefix
    void str16(std::string_view s) { blob16(BytesView(reinterpret_cast<const std::uint8_t*>(s.data()), s.size())); }

    const Bytes& bytes() const { return buf_; }
    Bytes take() { return std::move(buf_); }
    std::size_t size() const { return buf_.size(); }

private:
    Bytes buf_;
};

/// Cursor-based decoder; every read throws Error(MalformedEncoding) on underrun.
class ByteReader {
public:
    explicit ByteReader(BytesView b) : data_(b) {}

    std::uint8_t u8();
    std::uint16_t u16();
    std::uint32_t u32();
    std::uint64_t u64();
    std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
    Bytes raw(std::size_t n);
    Digest digest();
    Bytes blob16();
    Bytes blob32();
    std::string str16();

    bool atEnd() const { return pos_ == data_.size(); }
    std::size_t remaining() const { return data_.size() - pos_; }
    std::size_t position() const { return pos_; }
    /// All bytes consumed so far (used when a signature covers a message prefix).
    BytesView consumed() const { return data_.subspan(0, pos_); }
    void expectEnd() const; // throws if trailing bytes remain

private:
    void need(std::size_t n) const;
    BytesView data_;
    std::size_t pos_ = 0;
};

} // namespace pcn
