#include "kgforage/sparql.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <map>
#include <memory>
#include <unordered_map>

#include "kgforage/errors.hpp"

namespace kgforage {

// ---- terms ------------------------------------------------------------------

namespace {

const std::string* resource_id(const Term& t) {
    if (const auto* e = std::get_if<EntityId>(&t)) {
        return &e->id;
    }
    if (const auto* p = std::get_if<PropertyId>(&t)) {
        return &p->id;
    }
    return nullptr;
}

}  // namespace

bool same_term(const Term& a, const Term& b) {
    const auto* ra = resource_id(a);
    const auto* rb = resource_id(b);
    if (ra != nullptr || rb != nullptr) {
        return ra != nullptr && rb != nullptr && *ra == *rb;
    }
    return a == b;
}

std::string render_term(const Term& t) {
    return std::visit(
        [](const auto& v) -> std::string {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, EntityId> || std::is_same_v<T, PropertyId>) {
                return v.id;
            } else if constexpr (std::is_same_v<T, double>) {
                return format_number(v);
            } else if constexpr (std::is_same_v<T, Text>) {
                return v.text;
            } else {
                return v.iso;
            }
        },
        t);
}

Term to_term(const Value& v) {
    return std::visit([](const auto& x) -> Term { return x; }, v.storage());
}

Value term_to_value(const Term& t) {
    return std::visit(
        [](const auto& x) -> Value {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, PropertyId>) {
                throw Error("property term " + x.id + " is not a value");
            } else {
                return Value(x);
            }
        },
        t);
}

std::optional<std::size_t> BindingTable::column(std::string_view var) const {
    for (std::size_t i = 0; i < variables.size(); ++i) {
        if (variables[i] == var) {
            return i;
        }
    }
    return std::nullopt;
}

std::string render_entity(const EntityId& e, Dialect d) {
    return d == Dialect::wikidata ? "wd:" + e.id : e.id;
}

std::string render_property(const PropertyId& p, Dialect d) {
    return d == Dialect::wikidata ? "wdt:" + p.id : p.id;
}

SparqlText SparqlText::with_entities(std::span<const EntityId> entities) const {
    if (!has_values_slot) {
        throw Error("query has no VALUES slot");
    }
    std::string list;
    for (const auto& e : entities) {
        if (!list.empty()) {
            list += ' ';
        }
        list += render_entity(e, dialect);
    }
    SparqlText out = *this;
    out.text = text.substr(0, values_begin) + list + text.substr(values_end);
    out.values_end = values_begin + list.size();
    return out;
}

// ---- lexer ------------------------------------------------------------------

namespace {

enum class Tok { var, name, iri, string, number, punct, end };

struct Token {
    Tok kind = Tok::end;
    std::string text;
    std::size_t offset = 0;
    // Literal suffixes for strings: datatype (^^x) or language (@en).
    std::string datatype;
    std::string lang;
};

bool is_name_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_' || c == '-' || c == ':';
}

std::vector<Token> lex(std::string_view q) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < q.size()) {
        const char c = q[i];
        if (std::isspace(static_cast<unsigned char>(c)) != 0) {
            ++i;
            continue;
        }
        if (c == '#') {
            while (i < q.size() && q[i] != '\n') {
                ++i;
            }
            continue;
        }
        Token t;
        t.offset = i;
        if (c == '?' || c == '$') {
            std::size_t j = i + 1;
            while (j < q.size() &&
                   (std::isalnum(static_cast<unsigned char>(q[j])) != 0 || q[j] == '_')) {
                ++j;
            }
            if (j == i + 1) {
                throw SparqlParseError(i, "empty variable name");
            }
            t.kind = Tok::var;
            t.text = std::string(q.substr(i + 1, j - i - 1));
            i = j;
        } else if (c == '<') {
            const auto close = q.find('>', i + 1);
            if (close == std::string_view::npos) {
                throw SparqlParseError(i, "unterminated IRI");
            }
            t.kind = Tok::iri;
            t.text = std::string(q.substr(i + 1, close - i - 1));
            i = close + 1;
        } else if (c == '"' || c == '\'') {
            std::string s;
            std::size_t j = i + 1;
            bool closed = false;
            while (j < q.size()) {
                if (q[j] == '\\' && j + 1 < q.size()) {
                    const char e = q[j + 1];
                    s.push_back(e == 'n' ? '\n' : e == 't' ? '\t' : e);
                    j += 2;
                    continue;
                }
                if (q[j] == c) {
                    closed = true;
                    ++j;
                    break;
                }
                s.push_back(q[j++]);
            }
            if (!closed) {
                throw SparqlParseError(i, "unterminated string literal");
            }
            t.kind = Tok::string;
            t.text = std::move(s);
            if (j + 1 < q.size() && q[j] == '^' && q[j + 1] == '^') {
                j += 2;
                std::size_t k = j;
                if (k < q.size() && q[k] == '<') {
                    const auto close = q.find('>', k);
                    if (close == std::string_view::npos) {
                        throw SparqlParseError(k, "unterminated datatype IRI");
                    }
                    t.datatype = std::string(q.substr(k + 1, close - k - 1));
                    j = close + 1;
                } else {
                    while (k < q.size() && is_name_char(q[k])) {
                        ++k;
                    }
                    t.datatype = std::string(q.substr(j, k - j));
                    j = k;
                }
                if (t.datatype.empty()) {
                    throw SparqlParseError(j, "empty literal datatype");
                }
            } else if (j < q.size() && q[j] == '@') {
                std::size_t k = j + 1;
                while (k < q.size() &&
                       (std::isalnum(static_cast<unsigned char>(q[k])) != 0 || q[k] == '-')) {
                    ++k;
                }
                t.lang = std::string(q.substr(j + 1, k - j - 1));
                j = k;
            }
            i = j;
        } else if (std::isdigit(static_cast<unsigned char>(c)) != 0 ||
                   ((c == '-' || c == '+') && i + 1 < q.size() &&
                    std::isdigit(static_cast<unsigned char>(q[i + 1])) != 0)) {
            std::size_t j = i + 1;
            while (j < q.size() && (std::isdigit(static_cast<unsigned char>(q[j])) != 0 ||
                                    q[j] == '.' || q[j] == 'e' || q[j] == 'E')) {
                if (q[j] == '.' && (j + 1 >= q.size() ||
                                    std::isdigit(static_cast<unsigned char>(q[j + 1])) == 0)) {
                    break;  // statement terminator, not a decimal point
                }
                ++j;
            }
            // A digit-led run followed by letters is a bare identifier, not a number.
            if (j < q.size() && is_name_char(q[j]) && c != '-' && c != '+') {
                while (j < q.size() && is_name_char(q[j])) {
                    ++j;
                }
                t.kind = Tok::name;
            } else {
                t.kind = Tok::number;
            }
            t.text = std::string(q.substr(i, j - i));
            i = j;
        } else if (std::isalpha(static_cast<unsigned char>(c)) != 0 || c == '_' || c == ':') {
            std::size_t j = i;
            while (j < q.size() && is_name_char(q[j])) {
                ++j;
            }
            t.kind = Tok::name;
            t.text = std::string(q.substr(i, j - i));
            i = j;
        } else {
            t.kind = Tok::punct;
            t.text = std::string(1, c);
            ++i;
        }
        out.push_back(std::move(t));
    }
    Token end;
    end.kind = Tok::end;
    end.offset = q.size();
    out.push_back(end);
    return out;
}

std::string upper(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return out;
}

constexpr std::array kUnsupportedKeywords = {
    "FILTER", "BIND",     "UNION",    "MINUS",   "SERVICE", "ORDER",  "DISTINCT",
    "REDUCED", "OFFSET",  "HAVING",   "CONSTRUCT", "ASK",   "DESCRIBE", "GRAPH",
    "FROM",   "NAMED",    "BASE",     "INSERT",  "DELETE",  "EXISTS", "NOT",
    "GROUP_CONCAT", "SAMPLE", "IF",   "COALESCE", "REGEX",  "LANG",   "STR",
};

bool is_unsupported_keyword(std::string_view up) {
    return std::find(kUnsupportedKeywords.begin(), kUnsupportedKeywords.end(), up) !=
           kUnsupportedKeywords.end();
}

// ---- AST --------------------------------------------------------------------

enum class ResourceHint { unknown, entity, property };

struct PatternTerm {
    enum class Kind { var, resource, literal } kind = Kind::var;
    std::size_t slot = 0;  // var
    std::string id;        // resource
    ResourceHint hint = ResourceHint::unknown;
    Term literal;          // literal
};

struct TriplePattern {
    PatternTerm s, p, o;
};

struct GroupPattern;

struct ValuesBlock {
    std::size_t slot = 0;
    std::vector<PatternTerm> terms;
};

struct Element {
    std::variant<TriplePattern, ValuesBlock, std::shared_ptr<GroupPattern>> node;
};

struct GroupPattern {
    std::vector<Element> elements;
};

enum class AggFn { count, min, max, sum, avg };

struct Projection {
    std::string name;
    std::size_t slot = 0;  // plain variable
    std::optional<AggFn> agg;
    bool count_star = false;
};

struct ParsedQuery {
    std::vector<std::string> slots;  // variable names by slot
    std::vector<Projection> projection;
    GroupPattern where;
    std::vector<std::size_t> group_by;
    std::optional<std::size_t> limit;
};

class Parser {
public:
    explicit Parser(std::string_view q) : toks_(lex(q)) {}

    ParsedQuery parse() {
        while (keyword_is("PREFIX")) {
            parse_prefix();
        }
        if (!keyword_is("SELECT")) {
            unsupported_or_expected("SELECT");
        }
        next();
        parse_projection();
        if (keyword_is("WHERE")) {
            next();
        }
        q_.where = parse_group();
        if (keyword_is("GROUP")) {
            next();
            expect_keyword("BY");
            if (peek().kind != Tok::var) {
                fail("expected variable after GROUP BY");
            }
            while (peek().kind == Tok::var) {
                q_.group_by.push_back(slot(next().text));
            }
        }
        if (keyword_is("LIMIT")) {
            next();
            const auto& t = next();
            if (t.kind != Tok::number || t.text.find_first_not_of("0123456789") != std::string::npos) {
                throw SparqlParseError(t.offset, "LIMIT expects a non-negative integer");
            }
            q_.limit = std::stoull(t.text);
        }
        if (peek().kind != Tok::end) {
            unsupported_or_expected("end of query");
        }
        const bool aggregating = !q_.group_by.empty() ||
                                 std::any_of(q_.projection.begin(), q_.projection.end(),
                                             [](const Projection& p) { return p.agg.has_value(); });
        if (aggregating) {
            for (const auto& p : q_.projection) {
                if (!p.agg && std::find(q_.group_by.begin(), q_.group_by.end(), p.slot) ==
                                  q_.group_by.end()) {
                    throw SparqlParseError(0, "projected variable ?" + p.name +
                                                  " is neither grouped nor aggregated");
                }
            }
        }
        return std::move(q_);
    }

private:
    const Token& peek(std::size_t ahead = 0) const {
        return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
    }
    const Token& next() {
        const Token& t = toks_[pos_];
        if (pos_ + 1 < toks_.size()) {
            ++pos_;
        }
        return t;
    }
    bool keyword_is(std::string_view kw) const {
        return peek().kind == Tok::name && upper(peek().text) == kw;
    }
    bool punct_is(char c) const { return peek().kind == Tok::punct && peek().text[0] == c; }

    [[noreturn]] void fail(const std::string& why) const { throw SparqlParseError(peek().offset, why); }

    [[noreturn]] void unsupported_or_expected(const std::string& expected) const {
        const auto& t = peek();
        if (t.kind == Tok::name && (is_unsupported_keyword(upper(t.text)) || t.text == "a")) {
            throw UnsupportedSyntax(t.text);
        }
        if (t.kind == Tok::punct && std::string_view(";,/|^*+!").find(t.text[0]) != std::string_view::npos) {
            throw UnsupportedSyntax(t.text);
        }
        fail("expected " + expected + ", got '" + t.text + "'");
    }

    void expect_punct(char c) {
        if (!punct_is(c)) {
            unsupported_or_expected(std::string("'") + c + "'");
        }
        next();
    }
    void expect_keyword(std::string_view kw) {
        if (!keyword_is(kw)) {
            unsupported_or_expected(std::string(kw));
        }
        next();
    }

    std::size_t slot(const std::string& name) {
        auto it = std::find(q_.slots.begin(), q_.slots.end(), name);
        if (it != q_.slots.end()) {
            return static_cast<std::size_t>(it - q_.slots.begin());
        }
        q_.slots.push_back(name);
        return q_.slots.size() - 1;
    }

    void parse_prefix() {
        next();
        const auto& name = next();
        if (name.kind != Tok::name || name.text.empty() || name.text.back() != ':') {
            throw SparqlParseError(name.offset, "expected prefix name ending in ':'");
        }
        const auto& iri = next();
        if (iri.kind != Tok::iri) {
            throw SparqlParseError(iri.offset, "expected IRI in PREFIX declaration");
        }
        prefixes_[name.text.substr(0, name.text.size() - 1)] = iri.text;
    }

    void parse_projection() {
        if (punct_is('*')) {
            throw UnsupportedSyntax("*");
        }
        if (keyword_is("DISTINCT") || keyword_is("REDUCED")) {
            throw UnsupportedSyntax(peek().text);
        }
        while (true) {
            if (peek().kind == Tok::var) {
                Projection p;
                p.name = next().text;
                p.slot = slot(p.name);
                q_.projection.push_back(p);
            } else if (punct_is('(')) {
                next();
                Projection p;
                const auto& fn = next();
                const auto up = upper(fn.text);
                if (fn.kind != Tok::name) {
                    throw SparqlParseError(fn.offset, "expected aggregate function");
                }
                if (up == "COUNT") p.agg = AggFn::count;
                else if (up == "MIN") p.agg = AggFn::min;
                else if (up == "MAX") p.agg = AggFn::max;
                else if (up == "SUM") p.agg = AggFn::sum;
                else if (up == "AVG") p.agg = AggFn::avg;
                else throw UnsupportedSyntax(fn.text);
                expect_punct('(');
                if (keyword_is("DISTINCT")) {
                    throw UnsupportedSyntax(peek().text);
                }
                if (punct_is('*')) {
                    if (*p.agg != AggFn::count) {
                        throw UnsupportedSyntax("*");
                    }
                    next();
                    p.count_star = true;
                } else if (peek().kind == Tok::var) {
                    p.slot = slot(next().text);
                } else {
                    unsupported_or_expected("variable");
                }
                expect_punct(')');
                expect_keyword("AS");
                if (peek().kind != Tok::var) {
                    fail("expected variable after AS");
                }
                p.name = next().text;
                if (std::find(q_.slots.begin(), q_.slots.end(), p.name) != q_.slots.end()) {
                    fail("AS variable ?" + p.name + " already in use");
                }
                expect_punct(')');
                q_.projection.push_back(p);
            } else {
                break;
            }
        }
        if (q_.projection.empty()) {
            unsupported_or_expected("projection");
        }
    }

    GroupPattern parse_group() {
        expect_punct('{');
        GroupPattern g;
        while (!punct_is('}')) {
            if (peek().kind == Tok::end) {
                fail("unterminated group pattern");
            }
            if (keyword_is("VALUES")) {
                next();
                ValuesBlock vb;
                if (peek().kind != Tok::var) {
                    if (punct_is('(')) {
                        throw UnsupportedSyntax("VALUES (");
                    }
                    fail("expected variable after VALUES");
                }
                vb.slot = slot(next().text);
                expect_punct('{');
                while (!punct_is('}')) {
                    if (peek().kind == Tok::end) {
                        fail("unterminated VALUES block");
                    }
                    if (keyword_is("UNDEF")) {
                        throw UnsupportedSyntax("UNDEF");
                    }
                    auto t = parse_term();
                    if (t.kind == PatternTerm::Kind::var) {
                        fail("variables are not allowed in VALUES data");
                    }
                    vb.terms.push_back(std::move(t));
                }
                next();
                g.elements.push_back({std::move(vb)});
            } else if (keyword_is("OPTIONAL")) {
                next();
                g.elements.push_back({std::make_shared<GroupPattern>(parse_group())});
            } else if (punct_is('{')) {
                throw UnsupportedSyntax("{");
            } else {
                TriplePattern tp;
                tp.s = parse_term();
                tp.p = parse_term();
                tp.o = parse_term();
                if (tp.s.kind == PatternTerm::Kind::literal) {
                    fail("literal in subject position");
                }
                if (tp.p.kind == PatternTerm::Kind::literal) {
                    fail("literal in predicate position");
                }
                if (tp.p.kind == PatternTerm::Kind::resource &&
                    tp.p.hint == ResourceHint::unknown) {
                    tp.p.hint = ResourceHint::property;
                }
                g.elements.push_back({std::move(tp)});
                if (punct_is('.')) {
                    next();
                } else if (!punct_is('}') && !keyword_is("VALUES") && !keyword_is("OPTIONAL")) {
                    unsupported_or_expected("'.' or '}'");
                }
            }
        }
        next();
        return g;
    }

    PatternTerm parse_term() {
        const auto& t = peek();
        PatternTerm out;
        switch (t.kind) {
            case Tok::var:
                out.kind = PatternTerm::Kind::var;
                out.slot = slot(next().text);
                return out;
            case Tok::iri: {
                out.kind = PatternTerm::Kind::resource;
                const std::string iri = next().text;
                classify_iri(iri, out);
                return out;
            }
            case Tok::name: {
                const auto up = upper(t.text);
                if (is_unsupported_keyword(up) || t.text == "a") {
                    throw UnsupportedSyntax(t.text);
                }
                if (up == "TRUE" || up == "FALSE") {
                    throw UnsupportedSyntax(t.text);
                }
                out.kind = PatternTerm::Kind::resource;
                const std::string name = next().text;
                if (const auto colon = name.find(':'); colon != std::string::npos) {
                    const auto prefix = name.substr(0, colon);
                    auto it = prefixes_.find(prefix);
                    if (it == prefixes_.end()) {
                        throw SparqlParseError(t.offset, "undeclared prefix: " + prefix);
                    }
                    classify_iri(it->second + name.substr(colon + 1), out);
                } else {
                    out.id = name;
                }
                if (out.id.empty()) {
                    throw SparqlParseError(t.offset, "empty resource name");
                }
                return out;
            }
            case Tok::number: {
                out.kind = PatternTerm::Kind::literal;
                auto v = parse_number(next().text);
                if (!v) {
                    throw SparqlParseError(t.offset, "bad numeric literal");
                }
                out.literal = *v;
                return out;
            }
            case Tok::string: {
                const Token lit = next();
                out.kind = PatternTerm::Kind::literal;
                const auto& dt = lit.datatype;
                const auto tail = dt.substr(dt.find_last_of(":#/") == std::string::npos
                                                ? 0
                                                : dt.find_last_of(":#/") + 1);
                if (dt.empty() || tail == "string") {
                    out.literal = Text{lit.text};
                } else if (tail == "dateTime" || tail == "date") {
                    auto d = DateTime::parse(lit.text);
                    if (!d) {
                        throw SparqlParseError(lit.offset, "bad dateTime literal");
                    }
                    out.literal = *d;
                } else if (tail == "decimal" || tail == "integer" || tail == "double" ||
                           tail == "float") {
                    auto v = parse_number(lit.text);
                    if (!v) {
                        throw SparqlParseError(lit.offset, "bad numeric literal");
                    }
                    out.literal = *v;
                } else {
                    throw UnsupportedSyntax("^^" + dt);
                }
                return out;
            }
            case Tok::punct:
                if (t.text == "[" || t.text == "(") {
                    throw UnsupportedSyntax(t.text);
                }
                unsupported_or_expected("term");
            case Tok::end:
                fail("unexpected end of query");
        }
        fail("unexpected token");
    }

    static void classify_iri(const std::string& iri, PatternTerm& out) {
        const auto cut = iri.find_last_of("/#");
        out.id = cut == std::string::npos ? iri : iri.substr(cut + 1);
        if (iri.find("/prop/direct/") != std::string::npos) {
            out.hint = ResourceHint::property;
        } else if (iri.find("/entity/") != std::string::npos) {
            out.hint = ResourceHint::entity;
        }
    }

    std::vector<Token> toks_;
    std::size_t pos_ = 0;
    std::map<std::string, std::string> prefixes_;
    ParsedQuery q_;
};

// ---- evaluation -------------------------------------------------------------

using Solution = std::vector<std::optional<Term>>;

class Evaluator {
public:
    explicit Evaluator(const KnowledgeGraph& g) : g_(g) {}

    std::vector<Solution> eval(const GroupPattern& group, std::vector<Solution> input) const {
        for (const auto& el : group.elements) {
            std::vector<Solution> out;
            if (const auto* tp = std::get_if<TriplePattern>(&el.node)) {
                for (const auto& s : input) {
                    match_triple(*tp, s, out);
                }
            } else if (const auto* vb = std::get_if<ValuesBlock>(&el.node)) {
                for (const auto& s : input) {
                    for (const auto& pt : vb->terms) {
                        const Term t = resolve_constant(pt);
                        if (s[vb->slot] && !same_term(*s[vb->slot], t)) {
                            continue;
                        }
                        Solution n = s;
                        n[vb->slot] = t;
                        out.push_back(std::move(n));
                    }
                }
            } else {
                const auto& inner = *std::get<std::shared_ptr<GroupPattern>>(el.node);
                for (const auto& s : input) {
                    auto ext = eval(inner, {s});
                    if (ext.empty()) {
                        out.push_back(s);
                    } else {
                        std::move(ext.begin(), ext.end(), std::back_inserter(out));
                    }
                }
            }
            input = std::move(out);
        }
        return input;
    }

    Term resolve_constant(const PatternTerm& pt) const {
        if (pt.kind == PatternTerm::Kind::literal) {
            return pt.literal;
        }
        switch (pt.hint) {
            case ResourceHint::entity:
                return EntityId{pt.id};
            case ResourceHint::property:
                return PropertyId{pt.id};
            case ResourceHint::unknown:
                break;
        }
        if (g_.find_property(pt.id) != nullptr) {
            return PropertyId{pt.id};
        }
        return EntityId{pt.id};
    }

private:
    // Binds `pt` against `value` in `s`; false on conflict.
    bool unify(const PatternTerm& pt, const Term& value, Solution& s) const {
        if (pt.kind == PatternTerm::Kind::var) {
            auto& slot = s[pt.slot];
            if (slot) {
                return same_term(*slot, value);
            }
            slot = value;
            return true;
        }
        return same_term(resolve_constant(pt), value);
    }

    void match_triple(const TriplePattern& tp, const Solution& s, std::vector<Solution>& out) const {
        auto try_statement = [&](const Statement& st) {
            Solution n = s;
            if (unify(tp.s, st.subject, n) && unify(tp.p, st.property, n) &&
                unify(tp.o, to_term(st.value), n)) {
                out.push_back(std::move(n));
            }
        };
        std::optional<Term> subject;
        if (tp.s.kind == PatternTerm::Kind::var) {
            subject = s[tp.s.slot];
        } else {
            subject = resolve_constant(tp.s);
        }
        if (subject) {
            const auto* id = std::get_if<EntityId>(&*subject);
            if (id == nullptr) {
                return;  // only entities carry statements
            }
            for (std::size_t idx : g_.statement_indices(id->id)) {
                try_statement(g_.statements()[idx]);
            }
        } else {
            for (const auto& st : g_.statements()) {
                try_statement(st);
            }
        }
    }

    const KnowledgeGraph& g_;
};

std::optional<Term> aggregate(AggFn fn, const std::vector<Term>& vals) {
    switch (fn) {
        case AggFn::count:
            return Term{static_cast<double>(vals.size())};
        case AggFn::sum:
        case AggFn::avg: {
            double sum = 0;
            for (const auto& v : vals) {
                const auto* d = std::get_if<double>(&v);
                if (d == nullptr) {
                    return std::nullopt;
                }
                sum += *d;
            }
            if (fn == AggFn::sum) {
                return Term{sum};
            }
            if (vals.empty()) {
                return Term{0.0};
            }
            return Term{sum / static_cast<double>(vals.size())};
        }
        case AggFn::min:
        case AggFn::max: {
            if (vals.empty()) {
                return std::nullopt;
            }
            // Mixed kinds are not comparable in this subset; the group is unbound.
            const auto kind = vals.front().index();
            std::optional<Term> best;
            for (const auto& v : vals) {
                if (v.index() != kind) {
                    return std::nullopt;
                }
                bool better = false;
                if (!best) {
                    better = true;
                } else if (const auto* d = std::get_if<double>(&v)) {
                    better = fn == AggFn::min ? *d < std::get<double>(*best) : *d > std::get<double>(*best);
                } else if (const auto* t = std::get_if<DateTime>(&v)) {
                    better = fn == AggFn::min ? *t < std::get<DateTime>(*best)
                                              : *t > std::get<DateTime>(*best);
                } else {
                    const auto a = render_term(v);
                    const auto b = render_term(*best);
                    better = fn == AggFn::min ? a < b : a > b;
                }
                if (better) {
                    best = v;
                }
            }
            return best;
        }
    }
    return std::nullopt;
}

// Stable textual key for grouping; kind tag keeps "1" (number) apart from "1" (text).
std::string group_key(const Solution& s, const std::vector<std::size_t>& slots) {
    std::string key;
    for (auto slot : slots) {
        const auto& t = s[slot];
        if (!t) {
            key += "U|";
            continue;
        }
        const char tag = std::holds_alternative<EntityId>(*t) || std::holds_alternative<PropertyId>(*t)
                             ? 'R'
                             : static_cast<char>('0' + t->index());
        key += tag;
        key += render_term(*t);
        key += '\x1f';
    }
    return key;
}

}  // namespace

void check_select_syntax(std::string_view query) { Parser(query).parse(); }

BindingTable execute_select(const KnowledgeGraph& g, std::string_view query) {
    const ParsedQuery q = Parser(query).parse();
    Evaluator ev(g);
    auto solutions = ev.eval(q.where, {Solution(q.slots.size())});

    BindingTable table;
    for (const auto& p : q.projection) {
        table.variables.push_back(p.name);
    }
    const bool aggregating =
        !q.group_by.empty() || std::any_of(q.projection.begin(), q.projection.end(),
                                           [](const Projection& p) { return p.agg.has_value(); });
    if (!aggregating) {
        for (const auto& s : solutions) {
            std::vector<std::optional<Term>> row;
            row.reserve(q.projection.size());
            for (const auto& p : q.projection) {
                row.push_back(s[p.slot]);
            }
            table.rows.push_back(std::move(row));
        }
    } else {
        std::vector<std::vector<const Solution*>> groups;
        std::unordered_map<std::string, std::size_t> index;
        for (const auto& s : solutions) {
            auto key = group_key(s, q.group_by);
            auto [it, inserted] = index.emplace(std::move(key), groups.size());
            if (inserted) {
                groups.emplace_back();
            }
            groups[it->second].push_back(&s);
        }
        // Without GROUP BY an aggregate still yields one row over the empty group.
        if (groups.empty() && q.group_by.empty()) {
            groups.emplace_back();
        }
        for (const auto& members : groups) {
            std::vector<std::optional<Term>> row;
            for (const auto& p : q.projection) {
                if (!p.agg) {
                    row.push_back(members.front()->at(p.slot));
                    continue;
                }
                std::vector<Term> vals;
                for (const auto* m : members) {
                    if (p.count_star) {
                        vals.emplace_back(1.0);
                    } else if ((*m)[p.slot]) {
                        vals.push_back(*(*m)[p.slot]);
                    }
                }
                row.push_back(aggregate(*p.agg, vals));
            }
            table.rows.push_back(std::move(row));
        }
    }
    if (q.limit && table.rows.size() > *q.limit) {
        table.rows.resize(*q.limit);
    }
    return table;
}

}  // namespace kgforage
