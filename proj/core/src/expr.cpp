#include "bcsimplex/expr.hpp"

#include <charconv>
#include <cmath>
#include <regex>
#include <set>

#include "bcsimplex/error.hpp"

namespace bcsimplex {

// ---------------------------------------------------------------------------
// Construction

namespace ast {

namespace {
ExprPtr make(Expr e) { return std::make_shared<const Expr>(std::move(e)); }
} // namespace

ExprPtr constant(double v)
{
    if (v < 0.0) return neg(constant(-v));
    Expr e;
    e.kind = ExprKind::Constant;
    e.value = v;
    return make(std::move(e));
}

ExprPtr variable(std::string name)
{
    Expr e;
    e.kind = ExprKind::Variable;
    e.name = std::move(name);
    return make(std::move(e));
}

ExprPtr add(ExprPtr a, ExprPtr b)
{
    Expr e;
    e.kind = ExprKind::Add;
    e.lhs = std::move(a);
    e.rhs = std::move(b);
    return make(std::move(e));
}

ExprPtr sub(ExprPtr a, ExprPtr b) { return add(std::move(a), neg(std::move(b))); }

ExprPtr mul(ExprPtr a, ExprPtr b)
{
    Expr e;
    e.kind = ExprKind::Mul;
    e.lhs = std::move(a);
    e.rhs = std::move(b);
    return make(std::move(e));
}

ExprPtr pow(ExprPtr base, unsigned exponent)
{
    Expr e;
    e.kind = ExprKind::Pow;
    e.lhs = std::move(base);
    e.exponent = exponent;
    return make(std::move(e));
}

namespace {
ExprPtr unary(ExprKind kind, ExprPtr a)
{
    Expr e;
    e.kind = kind;
    e.lhs = std::move(a);
    return make(std::move(e));
}
} // namespace

ExprPtr neg(ExprPtr a) { return unary(ExprKind::Neg, std::move(a)); }
ExprPtr sin(ExprPtr a) { return unary(ExprKind::Sin, std::move(a)); }
ExprPtr cos(ExprPtr a) { return unary(ExprKind::Cos, std::move(a)); }

} // namespace ast

bool equal(const Expr& a, const Expr& b)
{
    if (a.kind != b.kind) return false;
    switch (a.kind) {
    case ExprKind::Constant:
        return a.value == b.value;
    case ExprKind::Variable:
        return a.name == b.name;
    case ExprKind::Add:
    case ExprKind::Mul:
        return equal(*a.lhs, *b.lhs) && equal(*a.rhs, *b.rhs);
    case ExprKind::Pow:
        return a.exponent == b.exponent && equal(*a.lhs, *b.lhs);
    case ExprKind::Neg:
    case ExprKind::Sin:
    case ExprKind::Cos:
        return equal(*a.lhs, *b.lhs);
    }
    return false;
}

// ---------------------------------------------------------------------------
// Printing

namespace {

std::string shortest(double v)
{
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

// Precedence levels: 1 sum, 2 product, 3 unary minus, 4 power, 5 atom.
std::string print_prec(const Expr& e, int parent)
{
    auto wrap = [parent](int own, std::string s) { return own < parent ? "(" + s + ")" : s; };
    switch (e.kind) {
    case ExprKind::Constant:
        return shortest(e.value);
    case ExprKind::Variable:
        return e.name;
    case ExprKind::Add:
        if (e.rhs->kind == ExprKind::Neg) {
            return wrap(1, print_prec(*e.lhs, 1) + " - " + print_prec(*e.rhs->lhs, 2));
        }
        return wrap(1, print_prec(*e.lhs, 1) + " + " + print_prec(*e.rhs, 2));
    case ExprKind::Mul:
        return wrap(2, print_prec(*e.lhs, 2) + "*" + print_prec(*e.rhs, 3));
    case ExprKind::Neg:
        return wrap(3, "-" + print_prec(*e.lhs, 3));
    case ExprKind::Pow:
        return wrap(4, print_prec(*e.lhs, 5) + "^" + std::to_string(e.exponent));
    case ExprKind::Sin:
        return "sin(" + print_prec(*e.lhs, 0) + ")";
    case ExprKind::Cos:
        return "cos(" + print_prec(*e.lhs, 0) + ")";
    }
    return {};
}

} // namespace

std::string print(const Expr& e) { return print_prec(e, 0); }

bool contains_trig(const Expr& e)
{
    if (e.kind == ExprKind::Sin || e.kind == ExprKind::Cos) return true;
    if (e.lhs && contains_trig(*e.lhs)) return true;
    return e.rhs && contains_trig(*e.rhs);
}

void collect_variables(const Expr& e, std::vector<std::string>& out)
{
    if (e.kind == ExprKind::Variable) {
        if (std::find(out.begin(), out.end(), e.name) == out.end()) out.push_back(e.name);
        return;
    }
    if (e.lhs) collect_variables(*e.lhs, out);
    if (e.rhs) collect_variables(*e.rhs, out);
}

ExprPtr bind_constants(const ExprPtr& e, const std::map<std::string, double>& values)
{
    switch (e->kind) {
    case ExprKind::Constant:
        return e;
    case ExprKind::Variable: {
        auto it = values.find(e->name);
        return it == values.end() ? e : ast::constant(it->second);
    }
    case ExprKind::Add:
        return ast::add(bind_constants(e->lhs, values), bind_constants(e->rhs, values));
    case ExprKind::Mul:
        return ast::mul(bind_constants(e->lhs, values), bind_constants(e->rhs, values));
    case ExprKind::Pow:
        return ast::pow(bind_constants(e->lhs, values), e->exponent);
    case ExprKind::Neg:
        return ast::neg(bind_constants(e->lhs, values));
    case ExprKind::Sin:
        return ast::sin(bind_constants(e->lhs, values));
    case ExprKind::Cos:
        return ast::cos(bind_constants(e->lhs, values));
    }
    return e;
}

double evaluate(const Expr& e, const std::function<double(const std::string&)>& lookup)
{
    switch (e.kind) {
    case ExprKind::Constant:
        return e.value;
    case ExprKind::Variable:
        return lookup(e.name);
    case ExprKind::Add:
        return evaluate(*e.lhs, lookup) + evaluate(*e.rhs, lookup);
    case ExprKind::Mul:
        return evaluate(*e.lhs, lookup) * evaluate(*e.rhs, lookup);
    case ExprKind::Pow: {
        const double b = evaluate(*e.lhs, lookup);
        double r = 1.0;
        for (unsigned i = 0; i < e.exponent; ++i) r *= b;
        return r;
    }
    case ExprKind::Neg:
        return -evaluate(*e.lhs, lookup);
    case ExprKind::Sin:
        return std::sin(evaluate(*e.lhs, lookup));
    case ExprKind::Cos:
        return std::cos(evaluate(*e.lhs, lookup));
    }
    return 0.0;
}

std::string trig_key(ExprKind kind, const Polynomial& argument)
{
    return std::string(kind == ExprKind::Sin ? "sin:" : "cos:") + argument.to_string();
}

Polynomial to_polynomial(const Expr& e, const std::vector<std::string>& vars, const std::map<std::string, double>& params,
                         const TrigSubstitution* trig)
{
    switch (e.kind) {
    case ExprKind::Constant:
        return Polynomial::constant(vars, e.value);
    case ExprKind::Variable: {
        if (std::find(vars.begin(), vars.end(), e.name) != vars.end()) return Polynomial::variable(vars, e.name);
        auto it = params.find(e.name);
        if (it == params.end()) throw ValidationError("undeclared identifier '" + e.name + "'");
        return Polynomial::constant(vars, it->second);
    }
    case ExprKind::Add:
        return to_polynomial(*e.lhs, vars, params, trig) + to_polynomial(*e.rhs, vars, params, trig);
    case ExprKind::Mul:
        return to_polynomial(*e.lhs, vars, params, trig) * to_polynomial(*e.rhs, vars, params, trig);
    case ExprKind::Pow:
        return pow(to_polynomial(*e.lhs, vars, params, trig), e.exponent);
    case ExprKind::Neg:
        return -to_polynomial(*e.lhs, vars, params, trig);
    case ExprKind::Sin:
    case ExprKind::Cos: {
        if (trig == nullptr) throw ValidationError("trigonometric term '" + print(e) + "' in a polynomial context");
        const Polynomial arg = to_polynomial(*e.lhs, vars, params, nullptr);
        auto it = trig->find(trig_key(e.kind, arg));
        if (it == trig->end()) throw ValidationError("no auxiliary state for '" + print(e) + "'");
        return it->second.with_variables(vars);
    }
    }
    return Polynomial(vars);
}

// ---------------------------------------------------------------------------
// Expression parser

namespace {

enum class Tok { Number, Ident, Plus, Minus, Star, Caret, LParen, RParen, Slash, End, Bad };

struct Token {
    Tok kind = Tok::End;
    std::string text;
    double number = 0.0;
    bool integral = false;
    int column = 0; // 0-based within the parsed text
};

class Lexer {
public:
    explicit Lexer(std::string_view s) : s_(s) {}

    Token next()
    {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
        Token t;
        t.column = static_cast<int>(pos_);
        if (pos_ >= s_.size()) return t;
        const char c = s_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || (c == '.' && pos_ + 1 < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_ + 1])))) {
            return number(t);
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            const std::size_t start = pos_;
            while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
            t.kind = Tok::Ident;
            t.text = std::string(s_.substr(start, pos_ - start));
            return t;
        }
        ++pos_;
        t.text = std::string(1, c);
        switch (c) {
        case '+': t.kind = Tok::Plus; break;
        case '-': t.kind = Tok::Minus; break;
        case '*': t.kind = Tok::Star; break;
        case '^': t.kind = Tok::Caret; break;
        case '(': t.kind = Tok::LParen; break;
        case ')': t.kind = Tok::RParen; break;
        case '/': t.kind = Tok::Slash; break;
        default: t.kind = Tok::Bad; break;
        }
        return t;
    }

private:
    Token number(Token t)
    {
        const std::size_t start = pos_;
        bool integral = true;
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
        if (pos_ < s_.size() && s_[pos_] == '.') {
            integral = false;
            ++pos_;
            while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
        }
        if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
            std::size_t p = pos_ + 1;
            if (p < s_.size() && (s_[p] == '+' || s_[p] == '-')) ++p;
            if (p < s_.size() && std::isdigit(static_cast<unsigned char>(s_[p]))) {
                integral = false;
                pos_ = p;
                while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
            }
        }
        t.kind = Tok::Number;
        t.text = std::string(s_.substr(start, pos_ - start));
        auto res = std::from_chars(t.text.data(), t.text.data() + t.text.size(), t.number);
        if (res.ec != std::errc{}) t.kind = Tok::Bad;
        t.integral = integral;
        return t;
    }

    std::string_view s_;
    std::size_t pos_ = 0;
};

class ExprParser {
public:
    ExprParser(std::string_view text, const std::function<bool(const std::string&)>& is_known, int line, int column_offset)
        : lex_(text), is_known_(is_known), line_(line), col0_(column_offset)
    {
        advance();
    }

    ExprPtr parse()
    {
        ExprPtr e = sum();
        if (tok_.kind != Tok::End) fail("unexpected '" + tok_.text + "'");
        return e;
    }

private:
    [[noreturn]] void fail(const std::string& what) const { fail_at(what, tok_.column); }
    [[noreturn]] void fail_at(const std::string& what, int column) const { throw ParseError(what, line_, col0_ + column + 1); }

    void advance() { tok_ = lex_.next(); }

    ExprPtr sum()
    {
        ExprPtr e = product();
        while (tok_.kind == Tok::Plus || tok_.kind == Tok::Minus) {
            const bool minus = tok_.kind == Tok::Minus;
            advance();
            ExprPtr r = product();
            e = minus ? ast::sub(e, r) : ast::add(e, r);
        }
        return e;
    }

    ExprPtr product()
    {
        ExprPtr e = unary();
        while (tok_.kind == Tok::Star || tok_.kind == Tok::Slash) {
            if (tok_.kind == Tok::Slash) fail("division is not supported");
            advance();
            e = ast::mul(e, unary());
        }
        return e;
    }

    ExprPtr unary()
    {
        if (tok_.kind == Tok::Minus) {
            advance();
            return ast::neg(unary());
        }
        return power();
    }

    ExprPtr power()
    {
        ExprPtr base = primary();
        if (tok_.kind != Tok::Caret) return base;
        const int caret_col = tok_.column;
        advance();
        if (tok_.kind != Tok::Number) fail("non-integer exponent: exponents must be non-negative integer literals");
        if (!tok_.integral || tok_.number < 0 || tok_.number > 1024) fail("non-integer exponent '" + tok_.text + "'");
        const auto exponent = static_cast<unsigned>(tok_.number);
        advance();
        if (tok_.kind == Tok::Caret) fail_at("chained exponents are ambiguous; use parentheses", caret_col);
        return ast::pow(base, exponent);
    }

    ExprPtr primary()
    {
        switch (tok_.kind) {
        case Tok::Number: {
            auto e = ast::constant(tok_.number);
            advance();
            return e;
        }
        case Tok::Ident: {
            const Token id = tok_;
            advance();
            if (id.text == "sin" || id.text == "cos") {
                if (tok_.kind != Tok::LParen) fail("expected '(' after " + id.text);
                advance();
                ++trig_depth_;
                if (trig_depth_ > 1) fail_at("nested trig: sin/cos arguments may not contain sin/cos", id.column);
                ExprPtr arg = sum();
                --trig_depth_;
                if (tok_.kind != Tok::RParen) fail("expected ')'");
                advance();
                return id.text == "sin" ? ast::sin(arg) : ast::cos(arg);
            }
            if (tok_.kind == Tok::LParen) fail_at("unknown function '" + id.text + "'", id.column);
            if (is_known_ && !is_known_(id.text)) fail_at("undeclared identifier '" + id.text + "'", id.column);
            return ast::variable(id.text);
        }
        case Tok::LParen: {
            advance();
            ExprPtr e = sum();
            if (tok_.kind != Tok::RParen) fail("expected ')'");
            advance();
            return e;
        }
        case Tok::End:
            fail("unexpected end of expression");
        default:
            fail("unexpected '" + tok_.text + "'");
        }
    }

    Lexer lex_;
    Token tok_;
    const std::function<bool(const std::string&)>& is_known_;
    int line_;
    int col0_;
    int trig_depth_ = 0;
};

} // namespace

ExprPtr parse_expression(std::string_view text, const std::function<bool(const std::string&)>& is_known, int line, int column_offset)
{
    return ExprParser(text, is_known, line, column_offset).parse();
}

Polynomial parse_polynomial(std::string_view text, const std::vector<std::string>& vars, const std::map<std::string, double>& params)
{
    auto known = [&](const std::string& n) {
        return std::find(vars.begin(), vars.end(), n) != vars.end() || params.count(n) > 0;
    };
    ExprPtr e = parse_expression(text, known);
    if (contains_trig(*e)) throw ValidationError("polynomial text may not contain sin/cos: " + std::string(text));
    return to_polynomial(*e, vars, params);
}

// ---------------------------------------------------------------------------
// SystemDecl

std::map<std::string, double> SystemDecl::param_values() const
{
    std::map<std::string, double> values;
    for (const auto& p : params) {
        values[p.name] = evaluate(*p.value, [&](const std::string& n) {
            auto it = values.find(n);
            if (it == values.end()) throw ValidationError("parameter '" + p.name + "' references unknown '" + n + "'");
            return it->second;
        });
    }
    return values;
}

SystemDecl SystemDecl::with_overrides(const std::map<std::string, double>& overrides) const
{
    SystemDecl out = *this;
    for (const auto& [name, value] : overrides) {
        auto it = std::find_if(out.params.begin(), out.params.end(), [&](const ParamDecl& p) { return p.name == name; });
        if (it == out.params.end()) throw ValidationError("override of nonexistent parameter '" + name + "'");
        it->value = ast::constant(value);
    }
    return out;
}

namespace {

bool same_exprs(const std::vector<ExprPtr>& a, const std::vector<ExprPtr>& b)
{
    return std::equal(a.begin(), a.end(), b.begin(), b.end(), [](const ExprPtr& x, const ExprPtr& y) { return equal(x, y); });
}

template <class T, class Eq>
bool same_list(const std::vector<T>& a, const std::vector<T>& b, Eq eq)
{
    return std::equal(a.begin(), a.end(), b.begin(), b.end(), eq);
}

} // namespace

bool operator==(const SystemDecl& a, const SystemDecl& b)
{
    auto bound_eq = [](const BoundDecl& x, const BoundDecl& y) { return x.name == y.name && equal(x.lo, y.lo) && equal(x.hi, y.hi); };
    auto assign_eq = [](const AssignDecl& x, const AssignDecl& y) { return x.name == y.name && equal(x.value, y.value); };
    return a.states == b.states && a.inputs == b.inputs &&
           same_list(a.params, b.params, [](const ParamDecl& x, const ParamDecl& y) { return x.name == y.name && equal(x.value, y.value); }) &&
           same_exprs(a.derivatives, b.derivatives) && same_list(a.admissible, b.admissible, bound_eq) &&
           same_list(a.controls, b.controls, bound_eq) && same_exprs(a.unsafe, b.unsafe) &&
           same_list(a.init, b.init,
                     [](const InitDecl& x, const InitDecl& y) {
                         return x.name == y.name && x.is_box == y.is_box && equal(x.lo, y.lo) && equal(x.hi, y.hi) &&
                                equal(x.value, y.value);
                     }) &&
           same_list(a.baseline, b.baseline, assign_eq) && same_list(a.reference, b.reference, assign_eq);
}

namespace {

const std::set<std::string, std::less<>> kSections = {"states",   "inputs", "params", "dynamics", "admissible",
                                                      "controls", "unsafe", "init",   "baseline", "reference"};
const std::set<std::string, std::less<>> kReserved = {"states", "inputs",   "params",    "dynamics", "admissible", "controls", "unsafe",
                                                      "init",   "baseline", "reference", "sin",      "cos",        "in",       "when"};

struct SourceLine {
    std::string text; // comment stripped, trimmed on the right
    int line = 0;
    int column = 0; // 0-based offset of text[0] in the original line
};

bool is_identifier(std::string_view s)
{
    if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
    return std::all_of(s.begin(), s.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
}

class ModelParser {
public:
    SystemDecl run(std::string_view text)
    {
        split_sections(text);
        parse_names(sections_["states"], decl_.states, "state");
        parse_names(sections_["inputs"], decl_.inputs, "input");
        parse_params();
        parse_dynamics();
        parse_bounds(sections_["admissible"], decl_.admissible, true);
        parse_bounds(sections_["controls"], decl_.controls, false);
        parse_unsafe();
        parse_init();
        parse_assignments(sections_["baseline"], decl_.baseline, true);
        parse_assignments(sections_["reference"], decl_.reference, false);
        check_completeness();
        return std::move(decl_);
    }

private:
    [[noreturn]] static void fail(const SourceLine& l, const std::string& what, int offset = 0)
    {
        throw ParseError(what, l.line, l.column + offset + 1);
    }

    void split_sections(std::string_view text)
    {
        std::string current;
        int line_no = 0;
        std::size_t pos = 0;
        while (pos <= text.size()) {
            std::size_t eol = text.find('\n', pos);
            if (eol == std::string_view::npos) eol = text.size();
            std::string raw(text.substr(pos, eol - pos));
            pos = eol + 1;
            ++line_no;
            if (!raw.empty() && raw.back() == '\r') raw.pop_back();
            if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
            std::size_t start = 0;
            while (start < raw.size() && std::isspace(static_cast<unsigned char>(raw[start]))) ++start;
            std::size_t end = raw.size();
            while (end > start && std::isspace(static_cast<unsigned char>(raw[end - 1]))) --end;
            if (start == end) continue;
            SourceLine l{raw.substr(start, end - start), line_no, static_cast<int>(start)};

            std::size_t word_end = 0;
            while (word_end < l.text.size() && !std::isspace(static_cast<unsigned char>(l.text[word_end]))) ++word_end;
            const std::string word = l.text.substr(0, word_end);

            if (word == "unsafe" && word_end < l.text.size()) {
                sections_["unsafe"].push_back(l); // `unsafe when ...` constraint, any position
                continue;
            }
            if (kSections.count(word) > 0) {
                current = word;
                if (!seen_.insert(word).second) fail(l, "duplicate section '" + word + "'");
                std::size_t rest = word_end;
                while (rest < l.text.size() && std::isspace(static_cast<unsigned char>(l.text[rest]))) ++rest;
                if (rest < l.text.size()) sections_[current].push_back({l.text.substr(rest), l.line, l.column + static_cast<int>(rest)});
                else sections_[current]; // register empty section
                continue;
            }
            if (current.empty()) fail(l, "content outside of any section");
            if (current == "unsafe") fail(l, "expected 'unsafe when <expr> < 0'");
            sections_[current].push_back(l);
        }
    }

    void declare(const SourceLine& l, const std::string& name, int offset, const char* what)
    {
        if (!is_identifier(name)) fail(l, "invalid identifier '" + name + "'", offset);
        if (kReserved.count(name) > 0) fail(l, "'" + name + "' is a reserved word", offset);
        if (!names_.insert(name).second) fail(l, "duplicate declaration of " + std::string(what) + " '" + name + "'", offset);
    }

    void parse_names(const std::vector<SourceLine>& lines, std::vector<std::string>& out, const char* what)
    {
        for (const auto& l : lines) {
            std::size_t i = 0;
            while (i < l.text.size()) {
                while (i < l.text.size() && (std::isspace(static_cast<unsigned char>(l.text[i])) || l.text[i] == ',')) ++i;
                const std::size_t start = i;
                while (i < l.text.size() && !std::isspace(static_cast<unsigned char>(l.text[i])) && l.text[i] != ',') ++i;
                if (start == i) continue;
                const std::string name = l.text.substr(start, i - start);
                declare(l, name, static_cast<int>(start), what);
                out.push_back(name);
            }
        }
    }

    bool is_state(const std::string& n) const { return std::find(decl_.states.begin(), decl_.states.end(), n) != decl_.states.end(); }
    bool is_input(const std::string& n) const { return std::find(decl_.inputs.begin(), decl_.inputs.end(), n) != decl_.inputs.end(); }
    bool is_param(const std::string& n) const { return params_.count(n) > 0; }

    // `name = expr` split; returns offset of expr.
    static bool split_assignment(const SourceLine& l, std::string& lhs, std::string& rhs, int& rhs_offset)
    {
        const auto eq = l.text.find('=');
        if (eq == std::string::npos) return false;
        std::size_t e = eq;
        while (e > 0 && std::isspace(static_cast<unsigned char>(l.text[e - 1]))) --e;
        lhs = l.text.substr(0, e);
        rhs = l.text.substr(eq + 1);
        rhs_offset = static_cast<int>(eq + 1);
        return true;
    }

    ExprPtr expr(const SourceLine& l, const std::string& text, int offset, const std::function<bool(const std::string&)>& known)
    {
        return parse_expression(text, known, l.line, l.column + offset);
    }

    // Trig arguments may reference states and parameters only.
    void check_trig_args(const SourceLine& l, const Expr& e, int offset)
    {
        if (e.kind == ExprKind::Sin || e.kind == ExprKind::Cos) {
            std::vector<std::string> vars;
            collect_variables(*e.lhs, vars);
            for (const auto& v : vars) {
                if (!is_state(v) && !is_param(v)) fail(l, "trig argument references '" + v + "', which is not a state variable", offset);
            }
            return;
        }
        if (e.lhs) check_trig_args(l, *e.lhs, offset);
        if (e.rhs) check_trig_args(l, *e.rhs, offset);
    }

    void parse_params()
    {
        for (const auto& l : sections_["params"]) {
            std::string lhs, rhs;
            int off = 0;
            if (!split_assignment(l, lhs, rhs, off)) fail(l, "expected 'name = value'");
            declare(l, lhs, 0, "parameter");
            auto e = expr(l, rhs, off, [this](const std::string& n) { return is_param(n); });
            if (contains_trig(*e)) fail(l, "parameters may not use sin/cos", off);
            decl_.params.push_back({lhs, e});
            params_[lhs] = evaluate(*e, [this](const std::string& n) { return params_.at(n); });
        }
    }

    double constant_value(const SourceLine& l, const std::string& text, int offset)
    {
        auto e = expr(l, text, offset, [this](const std::string& n) { return is_param(n); });
        return evaluate(*e, [this](const std::string& n) { return params_.at(n); });
    }

    void parse_dynamics()
    {
        static const std::regex re(R"(^d([A-Za-z_][A-Za-z0-9_]*)\s*/\s*dt\s*=(.*)$)");
        decl_.derivatives.assign(decl_.states.size(), nullptr);
        auto known = [this](const std::string& n) { return is_state(n) || is_input(n) || is_param(n); };
        for (const auto& l : sections_["dynamics"]) {
            std::smatch m;
            if (!std::regex_match(l.text, m, re)) fail(l, "expected 'd<state>/dt = <expr>'");
            const std::string state = m[1].str();
            auto it = std::find(decl_.states.begin(), decl_.states.end(), state);
            if (it == decl_.states.end()) fail(l, "derivative of undeclared state '" + state + "'", 1);
            const auto idx = static_cast<std::size_t>(it - decl_.states.begin());
            if (decl_.derivatives[idx]) fail(l, "duplicate derivative for state '" + state + "'");
            const int off = static_cast<int>(m.position(2));
            auto e = expr(l, m[2].str(), off, known);
            check_trig_args(l, *e, off);
            decl_.derivatives[idx] = e;
        }
    }

    void parse_bounds(const std::vector<SourceLine>& lines, std::vector<BoundDecl>& out, bool states)
    {
        static const std::regex re(R"(^([A-Za-z_][A-Za-z0-9_]*)\s+in\s*\[([^,\]]*),([^\]]*)\]\s*$)");
        std::set<std::string> seen;
        for (const auto& l : lines) {
            std::smatch m;
            if (!std::regex_match(l.text, m, re)) fail(l, "expected 'name in [lo, hi]'");
            const std::string name = m[1].str();
            if (!seen.insert(name).second) fail(l, "duplicate bound for '" + name + "'");
            if (states) {
                // Unknown names may be auxiliary trig states; they are resolved by recast.
                if (is_input(name) || is_param(name)) fail(l, "'" + name + "' is not a state");
            } else if (!is_input(name)) {
                fail(l, "'" + name + "' is not a declared input");
            }
            const int lo_off = static_cast<int>(m.position(2));
            const int hi_off = static_cast<int>(m.position(3));
            BoundDecl b{name, expr(l, m[2].str(), lo_off, [this](const std::string& n) { return is_param(n); }),
                        expr(l, m[3].str(), hi_off, [this](const std::string& n) { return is_param(n); })};
            const double lo = constant_value(l, m[2].str(), lo_off);
            const double hi = constant_value(l, m[3].str(), hi_off);
            if (states && !(lo < hi)) fail(l, "admissible bound for '" + name + "' requires lo < hi");
            if (!states && !(lo <= hi)) fail(l, "control bound for '" + name + "' is empty");
            out.push_back(std::move(b));
        }
    }

    void parse_unsafe()
    {
        static const std::regex re(R"(^unsafe\s+when\s+([^<]*)<\s*0\s*$)");
        for (const auto& l : sections_["unsafe"]) {
            std::smatch m;
            if (!std::regex_match(l.text, m, re)) fail(l, "expected 'unsafe when <expr> < 0'");
            const int off = static_cast<int>(m.position(1));
            auto e = expr(l, m[1].str(), off, [this](const std::string& n) { return is_state(n) || is_param(n); });
            check_trig_args(l, *e, off);
            decl_.unsafe.push_back(e);
        }
    }

    void parse_init()
    {
        static const std::regex box(R"(^([A-Za-z_][A-Za-z0-9_]*)\s+in\s*\[([^,\]]*),([^\]]*)\]\s*$)");
        std::set<std::string> seen;
        auto params_only = [this](const std::string& n) { return is_param(n); };
        for (const auto& l : sections_["init"]) {
            std::smatch m;
            InitDecl d;
            int name_off = 0;
            if (std::regex_match(l.text, m, box)) {
                d.name = m[1].str();
                d.lo = expr(l, m[2].str(), static_cast<int>(m.position(2)), params_only);
                d.hi = expr(l, m[3].str(), static_cast<int>(m.position(3)), params_only);
                if (constant_value(l, m[2].str(), static_cast<int>(m.position(2))) >
                    constant_value(l, m[3].str(), static_cast<int>(m.position(3)))) {
                    fail(l, "initial box for '" + d.name + "' has lo > hi");
                }
            } else {
                std::string lhs, rhs;
                int off = 0;
                if (!split_assignment(l, lhs, rhs, off)) fail(l, "expected 'name in [lo, hi]' or 'name = <expr>'");
                d.name = lhs;
                d.is_box = false;
                d.value = expr(l, rhs, off, [this](const std::string& n) { return is_state(n) || is_param(n); });
                check_trig_args(l, *d.value, off);
            }
            if (!is_state(d.name)) fail(l, "initial value for undeclared state '" + d.name + "'", name_off);
            if (!seen.insert(d.name).second) fail(l, "duplicate initial value for '" + d.name + "'");
            decl_.init.push_back(std::move(d));
        }
    }

    void parse_assignments(const std::vector<SourceLine>& lines, std::vector<AssignDecl>& out, bool baseline)
    {
        std::set<std::string> seen;
        for (const auto& l : lines) {
            std::string lhs, rhs;
            int off = 0;
            if (!split_assignment(l, lhs, rhs, off)) fail(l, "expected 'name = <expr>'");
            if (baseline && !is_input(lhs)) fail(l, "baseline law for undeclared input '" + lhs + "'");
            if (!baseline && !is_state(lhs)) fail(l, "reference for undeclared state '" + lhs + "'");
            if (!seen.insert(lhs).second) fail(l, "duplicate entry for '" + lhs + "'");
            ExprPtr e = baseline ? expr(l, rhs, off, [this](const std::string& n) { return is_state(n) || is_param(n); })
                                 : expr(l, rhs, off, [this](const std::string& n) { return is_param(n); });
            if (baseline) check_trig_args(l, *e, off);
            else if (contains_trig(*e)) fail(l, "reference values may not use sin/cos", off);
            out.push_back({lhs, e});
        }
    }

    void check_completeness()
    {
        SourceLine whole{"", 1, 0};
        if (decl_.states.empty()) fail(whole, "model declares no states");
        for (std::size_t i = 0; i < decl_.states.size(); ++i) {
            if (!decl_.derivatives[i]) fail(whole, "missing derivative for state '" + decl_.states[i] + "'");
            auto has = std::any_of(decl_.admissible.begin(), decl_.admissible.end(),
                                   [&](const BoundDecl& b) { return b.name == decl_.states[i]; });
            if (!has) fail(whole, "missing admissible bound for state '" + decl_.states[i] + "'");
        }
        // Keep admissible bounds in declaration order: states first, then overrides.
        std::stable_sort(decl_.admissible.begin(), decl_.admissible.end(), [this](const BoundDecl& a, const BoundDecl& b) {
            return rank(a.name) < rank(b.name);
        });
        std::vector<BoundDecl> ordered_controls;
        for (const auto& u : decl_.inputs) {
            auto it = std::find_if(decl_.controls.begin(), decl_.controls.end(), [&](const BoundDecl& b) { return b.name == u; });
            if (it == decl_.controls.end()) fail(whole, "missing control bound for input '" + u + "'");
            ordered_controls.push_back(*it);
        }
        decl_.controls = std::move(ordered_controls);
    }

    std::size_t rank(const std::string& name) const
    {
        auto it = std::find(decl_.states.begin(), decl_.states.end(), name);
        return it == decl_.states.end() ? decl_.states.size() : static_cast<std::size_t>(it - decl_.states.begin());
    }

    SystemDecl decl_;
    std::map<std::string, std::vector<SourceLine>> sections_;
    std::set<std::string> seen_;
    std::set<std::string> names_;
    std::map<std::string, double> params_;
};

} // namespace

SystemDecl parse_system(std::string_view text)
{
    return ModelParser().run(text);
}

std::string print_system(const SystemDecl& d)
{
    std::string out;
    auto line = [&out](const std::string& s) {
        out += s;
        out += '\n';
    };
    auto join = [](const std::vector<std::string>& v) {
        std::string s;
        for (const auto& n : v) s += (s.empty() ? "" : " ") + n;
        return s;
    };
    if (!d.name.empty()) line("# " + d.name);
    line("states " + join(d.states));
    line("inputs " + join(d.inputs));
    line("params");
    for (const auto& p : d.params) line("  " + p.name + " = " + print(*p.value));
    line("dynamics");
    for (std::size_t i = 0; i < d.states.size(); ++i) line("  d" + d.states[i] + "/dt = " + print(*d.derivatives[i]));
    line("admissible");
    for (const auto& b : d.admissible) line("  " + b.name + " in [" + print(*b.lo) + ", " + print(*b.hi) + "]");
    line("controls");
    for (const auto& b : d.controls) line("  " + b.name + " in [" + print(*b.lo) + ", " + print(*b.hi) + "]");
    line("unsafe");
    for (const auto& g : d.unsafe) line("  unsafe when " + print(*g) + " < 0");
    line("init");
    for (const auto& i : d.init) {
        if (i.is_box) line("  " + i.name + " in [" + print(*i.lo) + ", " + print(*i.hi) + "]");
        else line("  " + i.name + " = " + print(*i.value));
    }
    line("baseline");
    for (const auto& b : d.baseline) line("  " + b.name + " = " + print(*b.value));
    line("reference");
    for (const auto& r : d.reference) line("  " + r.name + " = " + print(*r.value));
    return out;
}

} // namespace bcsimplex
