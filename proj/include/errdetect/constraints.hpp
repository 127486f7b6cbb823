#pragma once

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "errdetect/dataset.hpp"

namespace errdetect {

enum class CompareOp { eq, ne, lt, gt, le, ge };

inline std::string_view to_string(CompareOp op) {
    switch (op) {
        case CompareOp::eq: return "=";
        case CompareOp::ne: return "!=";
        case CompareOp::lt: return "<";
        case CompareOp::gt: return ">";
        case CompareOp::le: return "<=";
        case CompareOp::ge: return ">=";
    }
    return "?";
}

// Either t<tuple>.<attr> or a string constant.
struct Operand {
    bool is_constant = false;
    int tuple = 0;  // 0 for t1, 1 for t2
    std::size_t attr = 0;
    std::string constant;
};

struct Predicate {
    Operand lhs;
    CompareOp op = CompareOp::eq;
    Operand rhs;
};

// not(P1 and ... and Pk) over one tuple or an ordered tuple pair.
struct DenialConstraint {
    std::string id;
    int arity = 2;
    std::vector<Predicate> predicates;
    std::string text;
};

namespace detail {

inline std::optional<double> as_decimal(std::string_view s) {
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v, std::chars_format::fixed);
    if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
    return v;
}

}  // namespace detail

// Equality is exact string equality. Ordering is numeric when both sides parse as decimals, else lexicographic.
inline bool compare_values(std::string_view a, CompareOp op, std::string_view b) {
    switch (op) {
        case CompareOp::eq: return a == b;
        case CompareOp::ne: return a != b;
        default: break;
    }
    int cmp = 0;
    auto da = detail::as_decimal(a);
    auto db = detail::as_decimal(b);
    if (da && db)
        cmp = (*da < *db) ? -1 : (*da > *db ? 1 : 0);
    else
        cmp = a.compare(b) < 0 ? -1 : (a.compare(b) > 0 ? 1 : 0);
    switch (op) {
        case CompareOp::lt: return cmp < 0;
        case CompareOp::gt: return cmp > 0;
        case CompareOp::le: return cmp <= 0;
        case CompareOp::ge: return cmp >= 0;
        default: return false;
    }
}

inline const std::string& operand_value(const Operand& o, const Row& t1, const Row& t2) {
    if (o.is_constant) return o.constant;
    return o.tuple == 0 ? t1[o.attr] : t2[o.attr];
}

inline bool holds(const Predicate& p, const Row& t1, const Row& t2) {
    return compare_values(operand_value(p.lhs, t1, t2), p.op, operand_value(p.rhs, t1, t2));
}

// True when (t1, t2) satisfies every predicate, i.e. the pair violates the constraint.
inline bool violates(const DenialConstraint& dc, const Row& t1, const Row& t2) {
    for (const auto& p : dc.predicates)
        if (!holds(p, t1, t2)) return false;
    return true;
}

inline bool violates(const DenialConstraint& dc, const Row& t) { return violates(dc, t, t); }

// ---------------------------------------------------------------------------
// Parser for:  dc := "t1" ["&" "t2"] ":" pred ("&" pred)*

namespace detail {

class DcParser {
public:
    DcParser(std::string_view text, const Schema& schema) : s_(text), schema_(schema) {}

    DenialConstraint parse() {
        DenialConstraint dc;
        dc.text = std::string(s_);
        skip_ws();
        expect("t1");
        skip_ws();
        dc.arity = 1;
        if (peek() == '&') {
            ++pos_;
            skip_ws();
            expect("t2");
            dc.arity = 2;
            skip_ws();
        }
        expect(":");
        arity_ = dc.arity;
        do {
            skip_ws();
            dc.predicates.push_back(predicate());
            skip_ws();
        } while (consume('&'));
        skip_ws();
        if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
        return dc;
    }

private:
    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError("constraint parse error at column " + std::to_string(pos_ + 1) + ": " + msg, 0, pos_ + 1);
    }

    char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }
    bool consume(char c) {
        if (peek() != c) return false;
        ++pos_;
        return true;
    }
    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    void expect(std::string_view tok) {
        if (s_.substr(pos_, tok.size()) != tok) fail("expected '" + std::string(tok) + "'");
        pos_ += tok.size();
    }

    Predicate predicate() {
        Predicate p;
        p.lhs = operand();
        skip_ws();
        p.op = op();
        skip_ws();
        p.rhs = operand();
        if (p.lhs.is_constant && p.rhs.is_constant) fail("predicate compares two constants");
        return p;
    }

    Operand operand() {
        Operand o;
        if (consume('\'')) {
            o.is_constant = true;
            while (pos_ < s_.size() && s_[pos_] != '\'') o.constant.push_back(s_[pos_++]);
            if (!consume('\'')) fail("unterminated string constant");
            return o;
        }
        if (s_.substr(pos_, 3) == "t1.") {
            o.tuple = 0;
        } else if (s_.substr(pos_, 3) == "t2.") {
            if (arity_ < 2) fail("t2 referenced in a single-tuple constraint");
            o.tuple = 1;
        } else {
            fail("expected t1.<attr>, t2.<attr> or a quoted constant");
        }
        pos_ += 3;
        const auto start = pos_;
        while (pos_ < s_.size()) {
            const char c = s_[pos_];
            if (std::isspace(static_cast<unsigned char>(c)) || c == '=' || c == '!' || c == '<' || c == '>' ||
                c == '&' || c == '\'' || c == '~')
                break;
            if (const auto three = s_.substr(pos_, 3); three == "\xE2\x89\xA0" || three == "\xE2\x89\xA4" ||
                                                       three == "\xE2\x89\xA5" || three == "\xE2\x89\x88")
                break;
            ++pos_;
        }
        std::string name(s_.substr(start, pos_ - start));
        if (name.empty()) fail("missing attribute name");
        auto idx = schema_.index_of(name);
        if (!idx) {
            pos_ = start;
            fail("unknown attribute '" + name + "'");
        }
        o.attr = *idx;
        return o;
    }

    CompareOp op() {
        auto two = s_.substr(pos_, 2);
        if (two == "!=" || two == "<>") return pos_ += 2, CompareOp::ne;
        if (two == "<=") return pos_ += 2, CompareOp::le;
        if (two == ">=") return pos_ += 2, CompareOp::ge;
        // UTF-8 forms of the mathematical operators.
        auto three = s_.substr(pos_, 3);
        if (three == "\xE2\x89\xA0") return pos_ += 3, CompareOp::ne;
        if (three == "\xE2\x89\xA4") return pos_ += 3, CompareOp::le;
        if (three == "\xE2\x89\xA5") return pos_ += 3, CompareOp::ge;
        if (three == "\xE2\x89\x88" || peek() == '~') fail("similarity operator is not supported");
        if (consume('=')) return CompareOp::eq;
        if (consume('<')) return CompareOp::lt;
        if (consume('>')) return CompareOp::gt;
        fail("malformed operator");
    }

    std::string_view s_;
    const Schema& schema_;
    std::size_t pos_ = 0;
    int arity_ = 2;
};

}  // namespace detail

inline DenialConstraint parse_dc(std::string_view text, const Schema& schema, std::string id = "dc") {
    auto dc = detail::DcParser(text, schema).parse();
    dc.id = std::move(id);
    return dc;
}

// One constraint per line; '#' starts a comment; blank lines are skipped.
inline std::vector<DenialConstraint> parse_constraints(const std::string& text, const Schema& schema) {
    std::vector<DenialConstraint> out;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        try {
            out.push_back(parse_dc(line, schema, "dc" + std::to_string(out.size() + 1)));
        } catch (const ParseError& e) {
            throw ParseError("line " + std::to_string(lineno) + ": " + e.what(), lineno, e.column());
        }
    }
    return out;
}

inline std::vector<DenialConstraint> load_constraints(const std::string& path, const Schema& schema) {
    return parse_constraints(csv::read_file(path), schema);
}

// ---------------------------------------------------------------------------
// Violation counting

// counts[t][k]: violations of constraint k involving tuple t.
using ViolationCounts = std::vector<std::vector<std::uint32_t>>;

// Reference O(n^2) count over ordered pairs (i, j), i != j. Both tuples of a violating pair are charged.
inline ViolationCounts count_violations_naive(const Dataset& d, const std::vector<DenialConstraint>& sigma) {
    const auto n = d.num_tuples();
    ViolationCounts counts(n, std::vector<std::uint32_t>(sigma.size(), 0));
    for (std::size_t k = 0; k < sigma.size(); ++k) {
        const auto& dc = sigma[k];
        if (dc.arity == 1) {
            for (std::size_t i = 0; i < n; ++i)
                if (violates(dc, d.row(i))) ++counts[i][k];
            continue;
        }
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (i != j && violates(dc, d.row(i), d.row(j))) {
                    ++counts[i][k];
                    ++counts[j][k];
                }
    }
    return counts;
}

namespace detail {

// Cross-tuple equality predicates t1.A = t2.B (either orientation) usable as a hash-join key.
struct BlockingKey {
    std::vector<std::size_t> t1_attrs;
    std::vector<std::size_t> t2_attrs;
};

inline BlockingKey blocking_key(const DenialConstraint& dc) {
    BlockingKey key;
    for (const auto& p : dc.predicates) {
        if (p.op != CompareOp::eq || p.lhs.is_constant || p.rhs.is_constant || p.lhs.tuple == p.rhs.tuple) continue;
        const auto& a = p.lhs.tuple == 0 ? p.lhs : p.rhs;
        const auto& b = p.lhs.tuple == 0 ? p.rhs : p.lhs;
        key.t1_attrs.push_back(a.attr);
        key.t2_attrs.push_back(b.attr);
    }
    return key;
}

inline std::string compose_key(const Row& r, const std::vector<std::size_t>& attrs) {
    std::string k;
    for (auto a : attrs) {
        k += r[a];
        k.push_back('\x1f');
    }
    return k;
}

}  // namespace detail

// Same result as count_violations_naive; pairs are blocked on cross-tuple equality predicates when present.
inline ViolationCounts count_violations(const Dataset& d, const std::vector<DenialConstraint>& sigma) {
    const auto n = d.num_tuples();
    ViolationCounts counts(n, std::vector<std::uint32_t>(sigma.size(), 0));
    for (std::size_t k = 0; k < sigma.size(); ++k) {
        const auto& dc = sigma[k];
        if (dc.arity == 1) {
            for (std::size_t i = 0; i < n; ++i)
                if (violates(dc, d.row(i))) ++counts[i][k];
            continue;
        }
        const auto key = detail::blocking_key(dc);
        if (key.t1_attrs.empty()) {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    if (i != j && violates(dc, d.row(i), d.row(j))) {
                        ++counts[i][k];
                        ++counts[j][k];
                    }
            continue;
        }
        std::unordered_map<std::string, std::vector<std::size_t>> blocks;
        for (std::size_t j = 0; j < n; ++j) blocks[detail::compose_key(d.row(j), key.t2_attrs)].push_back(j);
        for (std::size_t i = 0; i < n; ++i) {
            auto it = blocks.find(detail::compose_key(d.row(i), key.t1_attrs));
            if (it == blocks.end()) continue;
            for (auto j : it->second)
                if (i != j && violates(dc, d.row(i), d.row(j))) {
                    ++counts[i][k];
                    ++counts[j][k];
                }
        }
    }
    return counts;
}

// Violations charged to tuple t if its row were replaced by `row`, all other tuples unchanged.
inline std::vector<std::uint32_t> violations_for_row(const Dataset& d, const std::vector<DenialConstraint>& sigma,
                                                     std::size_t t, const Row& row) {
    std::vector<std::uint32_t> out(sigma.size(), 0);
    for (std::size_t k = 0; k < sigma.size(); ++k) {
        const auto& dc = sigma[k];
        if (dc.arity == 1) {
            out[k] = violates(dc, row) ? 1 : 0;
            continue;
        }
        for (std::size_t j = 0; j < d.num_tuples(); ++j) {
            if (j == t) continue;
            if (violates(dc, row, d.row(j))) ++out[k];
            if (violates(dc, d.row(j), row)) ++out[k];
        }
    }
    return out;
}

}  // namespace errdetect
