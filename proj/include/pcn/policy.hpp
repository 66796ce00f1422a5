#pragma once

#include "pcn/naming.hpp"

#include <memory>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace pcn {

/// An attribute is identified by (name, issuing authority). Names must be
/// NFC-normalized UTF-8; comparison is exact byte equality.
struct Attribute {
    std::string name;
    Principal authority;

    friend bool operator==(const Attribute& a, const Attribute& b)
    {
        return a.name == b.name && a.authority == b.authority;
    }
    friend std::strong_ordering operator<=>(const Attribute& a, const Attribute& b)
    {
        if (auto c = a.authority <=> b.authority; c != 0)
            return c;
        return a.name <=> b.name;
    }
};

using AttributeSet = std::set<Attribute>;

/// Boolean/threshold formula over attributes. AND is n-of-n, OR is 1-of-n.
struct PolicyTree {
    struct Leaf {
        Attribute attribute;
    };
    struct Threshold {
        std::uint16_t k = 1;
        std::vector<PolicyTree> children;
    };
    std::variant<Leaf, Threshold> node;

    bool isLeaf() const { return std::holds_alternative<Leaf>(node); }
    const Leaf& leaf() const { return std::get<Leaf>(node); }
    const Threshold& threshold() const { return std::get<Threshold>(node); }

    static PolicyTree attr(Attribute a) { return PolicyTree{Leaf{std::move(a)}}; }
    static PolicyTree threshold(std::uint16_t k, std::vector<PolicyTree> children)
    {
        return PolicyTree{Threshold{k, std::move(children)}};
    }
    static PolicyTree allOf(std::vector<PolicyTree> children)
    {
        auto k = static_cast<std::uint16_t>(children.size());
        return threshold(k, std::move(children));
    }
    static PolicyTree anyOf(std::vector<PolicyTree> children)
    {
        return threshold(1, std::move(children));
    }

    /// Throws MalformedPolicy unless every Threshold has 1 <= k <= |children|
    /// and at least one child.
    void validate() const;
    /// All leaf attributes, depth-first.
    std::vector<Attribute> leaves() const;

    friend bool operator==(const PolicyTree& a, const PolicyTree& b);
};

/// Pure evaluator: Leaf(a) holds iff a is in attrs; Threshold(k, cs) holds iff
/// at least k children hold. Monotone in attrs.
bool policySatisfied(const PolicyTree& policy, const AttributeSet& attrs);

/// Text grammar (see docs/policy-grammar.md):
///   policy  := or
///   or      := and ("or" and)*
///   and     := primary ("and" primary)*
///   primary := attr | INT "of" "(" policy ("," policy)* ")" | "(" policy ")"
///   attr    := bare word | 'quoted string' | "quoted string"
/// "and" binds tighter than "or". All attributes take the given authority.
PolicyTree parsePolicy(std::string_view text, const Principal& authority);
std::string renderPolicy(const PolicyTree& policy);

/// Canonical binary form (used inside envelopes; bit-exact).
void encodePolicy(ByteWriter& w, const PolicyTree& policy);
Bytes encodePolicy(const PolicyTree& policy);
PolicyTree decodePolicy(ByteReader& r);
PolicyTree decodePolicy(BytesView bytes);

} // namespace pcn
