#include "pcn/naming.hpp"

#include <algorithm>
#include <charconv>
#include <limits>

namespace pcn {

std::strong_ordering operator<=>(const Name& a, const Name& b)
{
    if (auto c = a.principal <=> b.principal; c != 0)
        return c;
    if (auto c = a.components <=> b.components; c != 0)
        return c;
    if (auto c = a.version <=> b.version; c != 0)
        return c;
    return a.segment <=> b.segment;
}

std::strong_ordering operator<=>(const Prefix& a, const Prefix& b)
{
    if (auto c = a.principal <=> b.principal; c != 0)
        return c;
    return a.components <=> b.components;
}

std::string escapeComponent(std::string_view raw)
{
    std::string out;
    out.reserve(raw.size());
    for (char c : raw) {
        if (c == '/')
            out += "%2F";
        else if (c == '%')
            out += "%25";
        else
            out.push_back(c);
    }
    return out;
}

std::string unescapeComponent(std::string_view escaped)
{
    std::string out;
    out.reserve(escaped.size());
    for (std::size_t i = 0; i < escaped.size(); ++i) {
        if (escaped[i] != '%') {
            out.push_back(escaped[i]);
            continue;
        }
        if (escaped.substr(i, 3) == "%2F")
            out.push_back('/');
        else if (escaped.substr(i, 3) == "%25")
            out.push_back('%');
        else
            fail(Errc::MalformedName, "bad escape in component");
        i += 2;
    }
    return out;
}

namespace {

// Exact "vNNN" / "sNNN" pattern: the marker letter followed by one or more
// digits and nothing else.
bool matchesMarker(std::string_view s, char marker, std::uint64_t& value)
{
    if (s.size() < 2 || s[0] != marker)
        return false;
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data() + 1, s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        return false;
    value = v;
    return true;
}

std::vector<std::string> splitRaw(std::string_view text)
{
    if (text.empty() || text[0] != '/')
        fail(Errc::MalformedName, "name must begin with '/'");
    std::vector<std::string> parts;
    std::size_t start = 1;
    while (start <= text.size()) {
        std::size_t slash = text.find('/', start);
        if (slash == std::string_view::npos) {
            parts.emplace_back(text.substr(start));
            break;
        }
        parts.emplace_back(text.substr(start, slash - start));
        start = slash + 1;
    }
    // one trailing slash is the conventional prefix spelling; drop it
    if (parts.size() > 1 && parts.back().empty())
        parts.pop_back();
    return parts;
}

} // namespace

Name parseName(std::string_view text, const Resolver& resolver)
{
    auto parts = splitRaw(text);
    if (parts.empty() || parts[0].empty())
        fail(Errc::MalformedName, "missing principal label");

    auto it = resolver.find(unescapeComponent(parts[0]));
    if (it == resolver.end())
        fail(Errc::UnknownPrincipal, parts[0]);

    Name name;
    name.principal = it->second;

    for (std::size_t i = 1; i < parts.size(); ++i) {
        if (parts[i].empty())
            fail(Errc::MalformedName, "empty component");
        name.components.push_back(unescapeComponent(parts[i]));
    }

    std::uint64_t value = 0;
    if (!name.components.empty() && matchesMarker(name.components.back(), 's', value)) {
        if (value > 0xffffffffull)
            fail(Errc::MalformedName, "segment out of range");
        name.components.pop_back();
        if (name.components.empty() || !matchesMarker(name.components.back(), 'v', value))
            fail(Errc::MalformedName, "segment without version");
        name.segment = static_cast<std::uint32_t>(value);
    }
    if (!name.components.empty() && matchesMarker(name.components.back(), 'v', value)) {
        if (value > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()))
            fail(Errc::MalformedName, "version out of range");
        name.version = static_cast<std::int64_t>(value);
        name.components.pop_back();
    } else if (name.segment) {
        fail(Errc::MalformedName, "segment without version");
    }
    return name;
}

Prefix parsePrefix(std::string_view text, const Resolver& resolver)
{
    Name n = parseName(text, resolver);
    if (n.version || n.segment)
        fail(Errc::MalformedName, "prefix cannot carry version or segment");
    return Prefix::of(n);
}

std::string render(const Name& name)
{
    std::string out = "/" + escapeComponent(name.principal.displayLabel);
    for (const auto& c : name.components) {
        out.push_back('/');
        out += escapeComponent(c);
    }
    if (name.version) {
        out += "/v" + std::to_string(*name.version);
        if (name.segment)
            out += "/s" + std::to_string(*name.segment);
    }
    return out;
}

std::string render(const Prefix& prefix)
{
    return render(prefix.asName()) + "/";
}

void canonicalEncode(ByteWriter& w, const Name& name)
{
    if (!name.valid())
        fail(Errc::MalformedName, "segment without version");
    if (name.components.size() > 0xffff)
        fail(Errc::MalformedName, "too many components");
    w.raw(name.principal.publicKeyHash);
    w.u16(static_cast<std::uint16_t>(name.components.size()));
    for (const auto& c : name.components) {
        if (c.size() > 0xffff)
            fail(Errc::ComponentTooLong, c.substr(0, 32));
        w.str16(c);
    }
    std::uint8_t flags = 0;
    if (name.version)
        flags |= 0x01;
    if (name.segment)
        flags |= 0x02;
    w.u8(flags);
    if (name.version)
        w.i64(*name.version);
    if (name.segment)
        w.u32(*name.segment);
}

Bytes canonicalEncode(const Name& name)
{
    ByteWriter w;
    canonicalEncode(w, name);
    return w.take();
}

Name canonicalDecode(ByteReader& r)
{
    Name name;
    name.principal.publicKeyHash = r.digest();
    std::uint16_t count = r.u16();
    name.components.reserve(count);
    for (std::uint16_t i = 0; i < count; ++i)
        name.components.push_back(r.str16());
    std::uint8_t flags = r.u8();
    if (flags & ~0x03)
        fail(Errc::MalformedEncoding, "unknown name flags");
    if (flags & 0x01)
        name.version = r.i64();
    if (flags & 0x02) {
        if (!name.version)
            fail(Errc::MalformedEncoding, "segment without version");
        name.segment = r.u32();
    }
    return name;
}

Name canonicalDecode(BytesView bytes)
{
    ByteReader r(bytes);
    Name n = canonicalDecode(r);
    r.expectEnd();
    return n;
}

void canonicalEncode(ByteWriter& w, const Prefix& prefix)
{
    if (prefix.components.size() > 0xffff)
        fail(Errc::MalformedName, "too many components");
    w.raw(prefix.principal.publicKeyHash);
    w.u16(static_cast<std::uint16_t>(prefix.components.size()));
    for (const auto& c : prefix.components) {
        if (c.size() > 0xffff)
            fail(Errc::ComponentTooLong, c.substr(0, 32));
        w.str16(c);
    }
}

Bytes canonicalEncode(const Prefix& prefix)
{
    ByteWriter w;
    canonicalEncode(w, prefix);
    return w.take();
}

Prefix canonicalDecodePrefix(ByteReader& r)
{
    Prefix p;
    p.principal.publicKeyHash = r.digest();
    std::uint16_t count = r.u16();
    p.components.reserve(count);
    for (std::uint16_t i = 0; i < count; ++i)
        p.components.push_back(r.str16());
    return p;
}

Prefix canonicalDecodePrefix(BytesView bytes)
{
    ByteReader r(bytes);
    Prefix p = canonicalDecodePrefix(r);
    r.expectEnd();
    return p;
}

bool isPrefixOf(const Prefix& prefix, const Name& name)
{
    if (prefix.principal != name.principal)
        return false;
    if (prefix.components.size() > name.components.size())
        return false;
    return std::equal(prefix.components.begin(), prefix.components.end(),
                      name.components.begin());
}

bool isPrefixOf(const Prefix& shorter, const Prefix& longer)
{
    return isPrefixOf(shorter, longer.asName());
}

} // namespace pcn
