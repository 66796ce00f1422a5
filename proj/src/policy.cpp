#include "pcn/policy.hpp"
#include "pcn/errors.hpp"

#include <cctype>
#include <charconv>

namespace pcn {

void PolicyTree::validate() const
{
    if (isLeaf()) {
        if (leaf().attribute.name.empty())
            fail(Errc::MalformedPolicy, "empty attribute name");
        return;
    }
    const auto& t = threshold();
    if (t.children.empty())
        fail(Errc::MalformedPolicy, "threshold with no children");
    if (t.k < 1 || t.k > t.children.size())
        fail(Errc::MalformedPolicy, "threshold k out of range");
    for (const auto& c : t.children)
        c.validate();
}

std::vector<Attribute> PolicyTree::leaves() const
{
    std::vector<Attribute> out;
    if (isLeaf()) {
        out.push_back(leaf().attribute);
        return out;
    }
    for (const auto& c : threshold().children) {
        auto sub = c.leaves();
        out.insert(out.end(), sub.begin(), sub.end());
    }
    return out;
}

bool operator==(const PolicyTree& a, const PolicyTree& b)
{
    if (a.isLeaf() != b.isLeaf())
        return false;
    if (a.isLeaf())
        return a.leaf().attribute == b.leaf().attribute;
    const auto& ta = a.threshold();
    const auto& tb = b.threshold();
    return ta.k == tb.k && ta.children == tb.children;
}

bool policySatisfied(const PolicyTree& policy, const AttributeSet& attrs)
{
    if (policy.isLeaf())
        return attrs.count(policy.leaf().attribute) > 0;
    const auto& t = policy.threshold();
    std::size_t satisfied = 0;
    for (const auto& c : t.children)
        if (policySatisfied(c, attrs))
            ++satisfied;
    return satisfied >= t.k;
}

// ---------------------------------------------------------------------------
// Text grammar

namespace {

struct Token {
    enum Kind { Word, Number, LParen, RParen, Comma, End } kind;
    std::string text;
    std::uint64_t number = 0;
    std::size_t pos = 0;
};

class Lexer {
public:
    explicit Lexer(std::string_view text) : text_(text) {}

    Token next()
    {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_])))
            ++pos_;
        std::size_t start = pos_;
        if (pos_ >= text_.size())
            return {Token::End, "", 0, start};
        char c = text_[pos_];
        if (c == '(') {
            ++pos_;
            return {Token::LParen, "(", 0, start};
        }
        if (c == ')') {
            ++pos_;
            return {Token::RParen, ")", 0, start};
        }
        if (c == ',') {
            ++pos_;
            return {Token::Comma, ",", 0, start};
        }
        if (c == '\'' || c == '"') {
            char quote = c;
            ++pos_;
            std::string s;
            while (pos_ < text_.size() && text_[pos_] != quote)
                s.push_back(text_[pos_++]);
            if (pos_ >= text_.size())
                fail(Errc::MalformedPolicy, "unterminated quote at offset " +
                                                std::to_string(start));
            ++pos_;
            return {Token::Word, s, 0, start};
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            std::uint64_t v = 0;
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_])))
                v = v * 10 + static_cast<std::uint64_t>(text_[pos_++] - '0');
            return {Token::Number, std::string(text_.substr(start, pos_ - start)), v, start};
        }
        std::string s;
        while (pos_ < text_.size()) {
            char d = text_[pos_];
            if (std::isspace(static_cast<unsigned char>(d)) || d == '(' || d == ')' || d == ',')
                break;
            s.push_back(d);
            ++pos_;
        }
        return {Token::Word, s, 0, start};
    }

private:
    std::string_view text_;
    std::size_t pos_ = 0;
};

class Parser {
public:
    Parser(std::string_view text, const Principal& authority)
        : lexer_(text), authority_(authority)
    {
        advance();
    }

    PolicyTree parse()
    {
        PolicyTree p = parseOr();
        expect(Token::End, "end of policy");
        return p;
    }

private:
    void advance() { tok_ = lexer_.next(); }

    void expect(Token::Kind kind, const char* what)
    {
        if (tok_.kind != kind)
            fail(Errc::MalformedPolicy,
                 std::string("expected ") + what + " at offset " + std::to_string(tok_.pos));
        advance();
    }

    bool wordIs(const char* w) const { return tok_.kind == Token::Word && tok_.text == w; }

    PolicyTree parseOr()
    {
        std::vector<PolicyTree> terms;
        terms.push_back(parseAnd());
        while (wordIs("or")) {
            advance();
            terms.push_back(parseAnd());
        }
        if (terms.size() == 1)
            return std::move(terms[0]);
        return PolicyTree::anyOf(std::move(terms));
    }

    PolicyTree parseAnd()
    {
        std::vector<PolicyTree> terms;
        terms.push_back(parsePrimary());
        while (wordIs("and")) {
            advance();
            terms.push_back(parsePrimary());
        }
        if (terms.size() == 1)
            return std::move(terms[0]);
        return PolicyTree::allOf(std::move(terms));
    }

    PolicyTree parsePrimary()
    {
        if (tok_.kind == Token::Number) {
            std::uint64_t k = tok_.number;
            advance();
            if (!wordIs("of"))
                fail(Errc::MalformedPolicy,
                     "expected 'of' at offset " + std::to_string(tok_.pos));
            advance();
            expect(Token::LParen, "'('");
            std::vector<PolicyTree> children;
            children.push_back(parseOr());
            while (tok_.kind == Token::Comma) {
                advance();
                children.push_back(parseOr());
            }
            expect(Token::RParen, "')'");
            if (k < 1 || k > children.size())
                fail(Errc::MalformedPolicy, "threshold k out of range");
            return PolicyTree::threshold(static_cast<std::uint16_t>(k), std::move(children));
        }
        if (tok_.kind == Token::LParen) {
            advance();
            PolicyTree p = parseOr();
            expect(Token::RParen, "')'");
            return p;
        }
        if (tok_.kind == Token::Word && !wordIs("and") && !wordIs("or") && !wordIs("of")) {
            Attribute a{tok_.text, authority_};
            advance();
            return PolicyTree::attr(std::move(a));
        }
        fail(Errc::MalformedPolicy,
             "expected attribute or '(' at offset " + std::to_string(tok_.pos));
    }

    Lexer lexer_;
    Principal authority_;
    Token tok_;
};

bool needsQuoting(const std::string& name)
{
    if (name.empty() || name == "and" || name == "or" || name == "of")
        return true;
    for (char c : name)
        if (std::isspace(static_cast<unsigned char>(c)) || c == '(' || c == ')' || c == ',' ||
            c == '\'' || c == '"')
            return true;
    return std::isdigit(static_cast<unsigned char>(name[0])) != 0;
}

void renderInto(const PolicyTree& p, std::string& out)
{
    if (p.isLeaf()) {
        const auto& name = p.leaf().attribute.name;
        if (needsQuoting(name)) {
            out.push_back('\'');
            out += name;
            out.push_back('\'');
        } else {
            out += name;
        }
        return;
    }
    const auto& t = p.threshold();
    out += std::to_string(t.k);
    out += " of (";
    for (std::size_t i = 0; i < t.children.size(); ++i) {
        if (i)
            out += ", ";
        renderInto(t.children[i], out);
    }
    out.push_back(')');
}

} // namespace

PolicyTree parsePolicy(std::string_view text, const Principal& authority)
{
    PolicyTree p = Parser(text, authority).parse();
    p.validate();
    return p;
}

std::string renderPolicy(const PolicyTree& policy)
{
    std::string out;
    renderInto(policy, out);
    return out;
}

// ---------------------------------------------------------------------------
// Canonical binary form

void encodePolicy(ByteWriter& w, const PolicyTree& policy)
{
    if (policy.isLeaf()) {
        w.u8(0);
        w.str16(policy.leaf().attribute.name);
        w.raw(policy.leaf().attribute.authority.publicKeyHash);
        return;
    }
    const auto& t = policy.threshold();
    if (t.children.size() > 0xffff)
        fail(Errc::MalformedPolicy, "too many children");
    w.u8(1);
    w.u16(t.k);
    w.u16(static_cast<std::uint16_t>(t.children.size()));
    for (const auto& c : t.children)
        encodePolicy(w, c);
}

Bytes encodePolicy(const PolicyTree& policy)
{
    ByteWriter w;
    encodePolicy(w, policy);
    return w.take();
}

PolicyTree decodePolicy(ByteReader& r)
{
    std::uint8_t kind = r.u8();
    if (kind == 0) {
        Attribute a;
        a.name = r.str16();
        a.authority.publicKeyHash = r.digest();
        return PolicyTree::attr(std::move(a));
    }
    if (kind != 1)
        fail(Errc::MalformedEncoding, "bad policy node kind");
    std::uint16_t k = r.u16();
    std::uint16_t count = r.u16();
    std::vector<PolicyTree> children;
    children.reserve(count);
    for (std::uint16_t i = 0; i < count; ++i)
        children.push_back(decodePolicy(r));
    PolicyTree p = PolicyTree::threshold(k, std::move(children));
    p.validate();
    return p;
}

PolicyTree decodePolicy(BytesView bytes)
{
    ByteReader r(bytes);
    PolicyTree p = decodePolicy(r);
    r.expectEnd();
    return p;
}

} // namespace pcn
