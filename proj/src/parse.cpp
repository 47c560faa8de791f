#include <cctype>
#include <cstdlib>
#include <string>

#include "herglotz/expr.hpp"

namespace herglotz::symexpr {

namespace {

class Parser {
public:
    Parser(const std::string& text, const std::set<std::string>& declared)
        : text_(text), declared_(declared) {}

    Expr run() {
        Expr e = parse_expr();
        skip_ws();
        if (pos_ != text_.size()) fail("unexpected trailing input");
        return e;
    }

private:
    const std::string& text_;
    const std::set<std::string>& declared_;
    std::size_t pos_ = 0;

    [[noreturn]] void fail(const std::string& what) const { throw SyntaxError(what, pos_); }

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    char peek() {
        skip_ws();
        return pos_ < text_.size() ? text_[pos_] : '\0';
    }

    bool accept(char c) {
        if (peek() == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    bool starts_number() {
        return std::isdigit(static_cast<unsigned char>(peek()));
    }

    // number := digits ("." digits)? (("e"|"E") ("+"|"-")? digits)?
    double lex_number() {
        std::size_t start = pos_;
        auto digits = [&] {
            std::size_t n = 0;
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
                ++pos_;
                ++n;
            }
            return n;
        };
        digits();
        if (pos_ < text_.size() && text_[pos_] == '.') {
            ++pos_;
            if (digits() == 0) fail("expected digits after decimal point");
        }
        if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
            ++pos_;
            if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
            if (digits() == 0) fail("expected digits in exponent");
        }
        return std::strtod(text_.c_str() + start, nullptr);
    }

    std::string lex_ident() {
        std::size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
            ++pos_;
        return text_.substr(start, pos_ - start);
    }

    Expr parse_expr() {
        Expr e = parse_term();
        for (;;) {
            if (accept('+'))
                e = Expr::binary(ExprKind::Add, std::move(e), parse_term());
            else if (accept('-'))
                e = Expr::binary(ExprKind::Sub, std::move(e), parse_term());
            else
                return e;
        }
    }

    Expr parse_term() {
        Expr e = parse_factor();
        for (;;) {
            if (accept('*'))
                e = Expr::binary(ExprKind::Mul, std::move(e), parse_factor());
            else if (accept('/'))
                e = Expr::binary(ExprKind::Div, std::move(e), parse_factor());
            else
                return e;
        }
    }

    Expr parse_factor() {
        if (accept('-')) {
            // A bare numeric literal absorbs the sign; "^" binds tighter than
            // unary minus, so "-3^2" stays -(3^2).
            if (starts_number()) {
                double v = lex_number();
                if (peek() == '^') {
                    ++pos_;
                    return Expr::unary(ExprKind::Neg,
                                       Expr::binary(ExprKind::Pow, Expr::constant(v), parse_factor()));
                }
                return Expr::constant(-v);
            }
            return Expr::unary(ExprKind::Neg, parse_power());
        }
        return parse_power();
    }

    Expr parse_power() {
        Expr base = parse_atom();
        if (accept('^')) return Expr::binary(ExprKind::Pow, std::move(base), parse_factor());
        return base;
    }

    Expr parse_atom() {
        char c = peek();
        if (c == '(') {
            ++pos_;
            Expr e = parse_expr();
            if (!accept(')')) fail("expected ')'");
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) return Expr::constant(lex_number());
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t at = pos_;
            std::string name = lex_ident();
            if (peek() == '(') {
                ExprKind k;
                if (name == "sin") k = ExprKind::Sin;
                else if (name == "cos") k = ExprKind::Cos;
                else if (name == "tan") k = ExprKind::Tan;
                else if (name == "exp") k = ExprKind::Exp;
                else if (name == "ln") k = ExprKind::Ln;
                else if (name == "sqrt") k = ExprKind::Sqrt;
                else throw UndeclaredIdentifierError(name, at);
                ++pos_;  // '('
                Expr arg = parse_expr();
                if (!accept(')')) fail("expected ')'");
                return Expr::unary(k, std::move(arg));
            }
            if (declared_.count(name) == 0) throw UndeclaredIdentifierError(name, at);
            return Expr::variable(std::move(name));
        }
        fail(pos_ >= text_.size() ? "unexpected end of input" : "unexpected character");
    }
};

}  // namespace

Expr parse_expr(const std::string& text, const std::set<std::string>& declared_vars) {
    return Parser(text, declared_vars).run();
}

}  // namespace herglotz::symexpr
