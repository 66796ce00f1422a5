#pragma once

#include "pcn/bytes.hpp"
#include "pcn/errors.hpp"

#include <compare>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace pcn {

/// A principal is its key hash; the display label is cosmetic and ignored by
/// equality, ordering and the canonical encoding.
struct Principal {
    Digest publicKeyHash{};
    std::string displayLabel;

    friend bool operator==(const Principal& a, const Principal& b)
    {
        return a.publicKeyHash == b.publicKeyHash;
    }
    friend std::strong_ordering operator<=>(const Principal& a, const Principal& b)
    {
        return a.publicKeyHash <=> b.publicKeyHash;
    }
};

/// Hierarchical, location-independent content name rooted at a principal.
/// Components are UTF-8 labels; version is a millisecond timestamp; a segment
/// is only meaningful inside a specific version.
struct Name {
    Principal principal;
    std::vector<std::string> components;
    std::optional<std::int64_t> version;
    std::optional<std::uint32_t> segment;

    bool valid() const { return !segment || version; }

    Name withoutVersion() const
    {
        Name n = *this;
        n.version.reset();
        n.segment.reset();
        return n;
    }
    Name withVersion(std::int64_t v) const
    {
        Name n = *this;
        n.version = v;
        n.segment.reset();
        return n;
    }
    Name child(std::string component) const
    {
        Name n = withoutVersion();
        n.components.push_back(std::move(component));
        return n;
    }

    friend bool operator==(const Name& a, const Name& b)
    {
        return a.principal == b.principal && a.components == b.components &&
               a.version == b.version && a.segment == b.segment;
    }
    friend std::strong_ordering operator<=>(const Name& a, const Name& b);
};

/// A Name with no version/segment; prefix-of is reflexive.
struct Prefix {
    Principal principal;
    std::vector<std::string> components;

    Name asName() const { return Name{principal, components, std::nullopt, std::nullopt}; }
    static Prefix of(const Name& n) { return Prefix{n.principal, n.components}; }

    friend bool operator==(const Prefix& a, const Prefix& b)
    {
        return a.principal == b.principal && a.components == b.components;
    }
    friend std::strong_ordering operator<=>(const Prefix& a, const Prefix& b);
};

using Resolver = std::map<std::string, Principal>;

/// Parse a human-readable "/Label/comp/.../vNNN/sNNN" name. The first label is
/// resolved to a Principal through the resolver map. "%2F" and "%25" unescape
/// to "/" and "%" inside components; any other escape is malformed.
///
/// Trailing components matching the exact vNNN / sNNN patterns are always
/// consumed as version/segment, so names whose final literal component looks
/// like one are not expressible in text form; the canonical binary encoding is
/// the authoritative representation and has no such ambiguity.
Name parseName(std::string_view text, const Resolver& resolver);
Prefix parsePrefix(std::string_view text, const Resolver& resolver);

/// Render "/Label/c1/c2/vNNN/sNNN" using the principal's display label.
std::string render(const Name& name);
std::string render(const Prefix& prefix);

std::string escapeComponent(std::string_view raw);
std::string unescapeComponent(std::string_view escaped); // throws MalformedName

/// Deterministic, self-delimiting binary encoding:
///   digest(32) || count(u16be) || { len(u16be) || bytes }* || flags(u8)
///   [ version(i64be) ] [ segment(u32be) ]
/// flags bit0 = version present, bit1 = segment present.
/// Equal Names produce byte-identical encodings; display labels are excluded.
Bytes canonicalEncode(const Name& name);
void canonicalEncode(ByteWriter& w, const Name& name);
Name canonicalDecode(BytesView bytes); // display label left empty
Name canonicalDecode(ByteReader& r);

/// Prefix encoding: digest(32) || count(u16be) || components (no flag byte).
Bytes canonicalEncode(const Prefix& prefix);
void canonicalEncode(ByteWriter& w, const Prefix& prefix);
Prefix canonicalDecodePrefix(BytesView bytes);
Prefix canonicalDecodePrefix(ByteReader& r);

/// Component-exact leading-subsequence test (not byte-substring).
bool isPrefixOf(const Prefix& prefix, const Name& name);
bool isPrefixOf(const Prefix& shorter, const Prefix& longer);

/// Longest-prefix-match table backed by a linear scan; the reference oracle.
template <typename V>
class LinearPrefixTable {
public:
    void insert(const Prefix& p, V value) { entries_[p] = std::move(value); }
    void erase(const Prefix& p) { entries_.erase(p); }
    V* find(const Prefix& p)
    {
        auto it = entries_.find(p);
        return it == entries_.end() ? nullptr : &it->second;
    }
    const V* longestMatch(const Name& name) const
    {
        const V* best = nullptr;
        std::size_t bestLen = 0;
        for (const auto& [p, v] : entries_) {
            if (isPrefixOf(p, name) && (best == nullptr || p.components.size() >= bestLen)) {
                if (best == nullptr || p.components.size() > bestLen) {
                    best = &v;
                    bestLen = p.components.size();
                }
            }
        }
        return best;
    }
    template <typename F>
    void forEach(F&& f) const
    {
        for (const auto& [p, v] : entries_)
            f(p, v);
    }
    template <typename Pred>
    void eraseIf(Pred&& pred)
    {
        for (auto it = entries_.begin(); it != entries_.end();) {
            if (pred(it->first, it->second))
                it = entries_.erase(it);
            else
                ++it;
        }
    }
    std::size_t size() const { return entries_.size(); }

private:
    std::map<Prefix, V> entries_;
};

/// Component trie keyed by (principal digest, components...).
template <typename V>
class TriePrefixTable {
public:
    void insert(const Prefix& p, V value)
    {
        Node* n = &rootFor(p.principal.publicKeyHash);
        for (const auto& c : p.components)
            n = &n->children[c];
        if (!n->value)
            ++size_;
        n->value = std::move(value);
    }
    void erase(const Prefix& p)
    {
        Node* n = findNode(p);
        if (n && n->value) {
            n->value.reset();
            --size_;
        }
    }
    V* find(const Prefix& p)
    {
        Node* n = findNode(p);
        return n && n->value ? &*n->value : nullptr;
    }
    const V* longestMatch(const Name& name) const
    {
        auto rit = roots_.find(name.principal.publicKeyHash);
        if (rit == roots_.end())
            return nullptr;
        const Node* n = &rit->second;
        const V* best = n->value ? &*n->value : nullptr;
        for (const auto& c : name.components) {
            auto it = n->children.find(c);
            if (it == n->children.end())
                break;
            n = &it->second;
            if (n->value)
                best = &*n->value;
        }
        return best;
    }
    template <typename F>
    void forEach(F&& f) const
    {
        Prefix p;
        for (const auto& [digest, root] : roots_) {
            p.principal = Principal{digest, ""};
            p.components.clear();
            walk(root, p, f);
        }
    }
    template <typename Pred>
    void eraseIf(Pred&& pred)
    {
        std::vector<Prefix> doomed;
        forEach([&](const Prefix& p, const V& v) {
            if (pred(p, v))
                doomed.push_back(p);
        });
        for (const auto& p : doomed)
            erase(p);
    }
    void clear()
    {
        roots_.clear();
        size_ = 0;
    }
    std::size_t size() const { return size_; }

private:
    struct Node {
        std::optional<V> value;
        std::map<std::string, Node> children;
    };

    Node& rootFor(const Digest& d) { return roots_[d]; }
    Node* findNode(const Prefix& p)
    {
        auto rit = roots_.find(p.principal.publicKeyHash);
        if (rit == roots_.end())
            return nullptr;
        Node* n = &rit->second;
        for (const auto& c : p.components) {
            auto it = n->children.find(c);
            if (it == n->children.end())
                return nullptr;
            n = &it->second;
        }
        return n;
    }
    template <typename F>
    static void walk(const Node& n, Prefix& p, F& f)
    {
        if (n.value)
            f(p, *n.value);
        for (const auto& [c, child] : n.children) {
            p.components.push_back(c);
            walk(child, p, f);
            p.components.pop_back();
        }
    }

    std::map<Digest, Node> roots_;
    std::size_t size_ = 0;
};

} // namespace pcn
