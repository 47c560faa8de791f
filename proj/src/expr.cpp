#include "herglotz/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>

namespace herglotz::symexpr {

bool is_unary(ExprKind k) {
    switch (k) {
        case ExprKind::Neg:
        case ExprKind::Sin:
        case ExprKind::Cos:
        case ExprKind::Tan:
        case ExprKind::Exp:
        case ExprKind::Ln:
        case ExprKind::Sqrt:
            return true;
        default:
            return false;
    }
}

bool is_binary(ExprKind k) {
    switch (k) {
        case ExprKind::Add:
        case ExprKind::Sub:
        case ExprKind::Mul:
        case ExprKind::Div:
        case ExprKind::Pow:
            return true;
        default:
            return false;
    }
}

Expr Expr::constant(double value) {
    auto n = std::make_shared<Node>();
    n->kind = ExprKind::Constant;
    n->value = value;
    return Expr(std::move(n));
}

Expr Expr::variable(std::string name) {
    auto n = std::make_shared<Node>();
    n->kind = ExprKind::Variable;
    n->name = std::move(name);
    return Expr(std::move(n));
}

Expr Expr::unary(ExprKind k, Expr operand) {
    auto n = std::make_shared<Node>();
    n->kind = k;
    n->a = std::move(operand.node_);
    return Expr(std::move(n));
}

Expr Expr::binary(ExprKind k, Expr lhs, Expr rhs) {
    auto n = std::make_shared<Node>();
    n->kind = k;
    n->a = std::move(lhs.node_);
    n->b = std::move(rhs.node_);
    return Expr(std::move(n));
}

double Expr::constant_value() const { return node_->value; }
const std::string& Expr::variable_name() const { return node_->name; }

Expr Expr::operand() const { return Expr(node_->a); }
Expr Expr::lhs() const { return Expr(node_->a); }
Expr Expr::rhs() const { return Expr(node_->b); }

bool Expr::same_as(const Expr& other) const {
    const Node* x = node_.get();
    const Node* y = other.node_.get();
    if (x == y) return true;
    if (x->kind != y->kind) return false;
    switch (x->kind) {
        case ExprKind::Constant:
            return x->value == y->value;
        case ExprKind::Variable:
            return x->name == y->name;
        default:
            break;
    }
    if (is_unary(x->kind)) return operand().same_as(other.operand());
    return lhs().same_as(other.lhs()) && rhs().same_as(other.rhs());
}

Expr operator+(Expr a, Expr b) { return Expr::binary(ExprKind::Add, std::move(a), std::move(b)); }
Expr operator-(Expr a, Expr b) { return Expr::binary(ExprKind::Sub, std::move(a), std::move(b)); }
Expr operator*(Expr a, Expr b) { return Expr::binary(ExprKind::Mul, std::move(a), std::move(b)); }
Expr operator/(Expr a, Expr b) { return Expr::binary(ExprKind::Div, std::move(a), std::move(b)); }
Expr operator-(Expr a) { return Expr::unary(ExprKind::Neg, std::move(a)); }
Expr pow(Expr base, Expr exponent) {
    return Expr::binary(ExprKind::Pow, std::move(base), std::move(exponent));
}
Expr sin(Expr a) { return Expr::unary(ExprKind::Sin, std::move(a)); }
Expr cos(Expr a) { return Expr::unary(ExprKind::Cos, std::move(a)); }
Expr tan(Expr a) { return Expr::unary(ExprKind::Tan, std::move(a)); }
Expr exp(Expr a) { return Expr::unary(ExprKind::Exp, std::move(a)); }
Expr ln(Expr a) { return Expr::unary(ExprKind::Ln, std::move(a)); }
Expr sqrt(Expr a) { return Expr::unary(ExprKind::Sqrt, std::move(a)); }

double Binding::get(const std::string& name) const {
    auto it = values_.find(name);
    if (it == values_.end()) throw UnboundVariableError(name);
    return it->second;
}

SyntaxError::SyntaxError(const std::string& what, std::size_t off)
    : Error("syntax error at offset " + std::to_string(off) + ": " + what), offset(off) {}

UndeclaredIdentifierError::UndeclaredIdentifierError(const std::string& n, std::size_t off)
    : Error("undeclared identifier '" + n + "' at offset " + std::to_string(off)),
      name(n),
      offset(off) {}

UnboundVariableError::UnboundVariableError(const std::string& n)
    : Error("unbound variable '" + n + "'"), name(n) {}

EvalDomainError::EvalDomainError(const std::string& what, const std::string& sub)
    : Error("domain error: " + what + " in '" + sub + "'"), subexpression(sub) {}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// evaluation

double eval(const Expr& e, const Binding& binding) {
    switch (e.kind()) {
        case ExprKind::Constant:
            return e.constant_value();
        case ExprKind::Variable:
            return binding.get(e.variable_name());
        case ExprKind::Neg:
            return -eval(e.operand(), binding);
        case ExprKind::Sin:
            return std::sin(eval(e.operand(), binding));
        case ExprKind::Cos:
            return std::cos(eval(e.operand(), binding));
        case ExprKind::Tan:
            return std::tan(eval(e.operand(), binding));
        case ExprKind::Exp:
            return std::exp(eval(e.operand(), binding));
        case ExprKind::Ln: {
            double a = eval(e.operand(), binding);
            if (a <= 0.0) throw EvalDomainError("ln of non-positive value", to_string(e));
            return std::log(a);
        }
        case ExprKind::Sqrt: {
            double a = eval(e.operand(), binding);
            if (a < 0.0) throw EvalDomainError("sqrt of negative value", to_string(e));
            return std::sqrt(a);
        }
        case ExprKind::Add:
            return eval(e.lhs(), binding) + eval(e.rhs(), binding);
        case ExprKind::Sub:
            return eval(e.lhs(), binding) - eval(e.rhs(), binding);
        case ExprKind::Mul:
            return eval(e.lhs(), binding) * eval(e.rhs(), binding);
        case ExprKind::Div: {
            double b = eval(e.rhs(), binding);
            if (b == 0.0) throw EvalDomainError("division by zero", to_string(e));
            return eval(e.lhs(), binding) / b;
        }
        case ExprKind::Pow: {
            double a = eval(e.lhs(), binding);
            double b = eval(e.rhs(), binding);
            if (a == 0.0 && b < 0.0) throw EvalDomainError("0 raised to negative power", to_string(e));
            if (a < 0.0 && b != std::floor(b))
                throw EvalDomainError("negative base with fractional exponent", to_string(e));
            return std::pow(a, b);
        }
    }
    throw Error("corrupt expression node");
}

std::set<std::string> free_variables(const Expr& e) {
    std::set<std::string> out;
    auto walk = [&out](auto&& self, const Expr& x) -> void {
        switch (x.kind()) {
            case ExprKind::Constant:
                return;
            case ExprKind::Variable:
                out.insert(x.variable_name());
                return;
            default:
                break;
        }
        if (is_unary(x.kind())) {
            self(self, x.operand());
        } else {
            self(self, x.lhs());
            self(self, x.rhs());
        }
    };
    walk(walk, e);
    return out;
}

// ---------------------------------------------------------------------------
// simplification

namespace {

bool is_const(const Expr& e) { return e.kind() == ExprKind::Constant; }

// Constant folding of a unary op, declined when the value falls outside the
// operation's domain (the unreduced node then fails at evaluation time).
bool fold_unary(ExprKind k, double a, double& out) {
    switch (k) {
        case ExprKind::Neg: out = -a; return true;
        case ExprKind::Sin: out = std::sin(a); return true;
        case ExprKind::Cos: out = std::cos(a); return true;
        case ExprKind::Tan: out = std::tan(a); return std::isfinite(out);
        case ExprKind::Exp: out = std::exp(a); return std::isfinite(out);
        case ExprKind::Ln:
            if (a <= 0.0) return false;
            out = std::log(a);
            return true;
        case ExprKind::Sqrt:
            if (a < 0.0) return false;
            out = std::sqrt(a);
            return true;
        default: return false;
    }
}

bool fold_binary(ExprKind k, double a, double b, double& out) {
    switch (k) {
        case ExprKind::Add: out = a + b; return true;
        case ExprKind::Sub: out = a - b; return true;
        case ExprKind::Mul: out = a * b; return true;
        case ExprKind::Div:
            if (b == 0.0) return false;  // flagged at evaluation time
            out = a / b;
            return true;
        case ExprKind::Pow:
            if (a == 0.0 && b < 0.0) return false;
            if (a < 0.0 && b != std::floor(b)) return false;
            out = std::pow(a, b);
            return std::isfinite(out);
        default: return false;
    }
}

// One bottom-up rewrite pass. Sets `changed` whenever a rule fired.
Expr rewrite(const Expr& e, bool& changed) {
    if (e.kind() == ExprKind::Constant || e.kind() == ExprKind::Variable) return e;

    if (is_unary(e.kind())) {
        Expr a = rewrite(e.operand(), changed);
        if (is_const(a)) {
            double v;
            if (fold_unary(e.kind(), a.constant_value(), v)) {
                changed = true;
                return Expr::constant(v);
            }
        }
        if (e.kind() == ExprKind::Neg && a.kind() == ExprKind::Neg) {
            changed = true;  // -(-x) -> x
            return a.operand();
        }
        return Expr::unary(e.kind(), std::move(a));
    }

    Expr a = rewrite(e.lhs(), changed);
    Expr b = rewrite(e.rhs(), changed);
    const ExprKind k = e.kind();

    if (is_const(a) && is_const(b)) {
        double v;
        if (fold_binary(k, a.constant_value(), b.constant_value(), v)) {
            changed = true;
            return Expr::constant(v);
        }
    }

    auto fire = [&changed](Expr r) {
        changed = true;
        return r;
    };

    switch (k) {
        case ExprKind::Add:
            if (a.is_constant(0.0)) return fire(b);
            if (b.is_constant(0.0)) return fire(a);
            // keep constants on the left so nested ones meet and fold
            if (is_const(b) && !is_const(a)) return fire(Expr::binary(k, b, a));
            if (is_const(a) && b.kind() == ExprKind::Add && is_const(b.lhs()))
                return fire(Expr::binary(
                    k, Expr::constant(a.constant_value() + b.lhs().constant_value()), b.rhs()));
            break;
        case ExprKind::Sub:
            if (b.is_constant(0.0)) return fire(a);
            if (a.is_constant(0.0)) return fire(Expr::unary(ExprKind::Neg, b));
            break;
        case ExprKind::Mul:
            if (a.is_constant(0.0) || b.is_constant(0.0)) return fire(Expr::constant(0.0));
            if (a.is_constant(1.0)) return fire(b);
            if (b.is_constant(1.0)) return fire(a);
            if (is_const(b) && !is_const(a)) return fire(Expr::binary(k, b, a));
            if (is_const(a) && b.kind() == ExprKind::Mul && is_const(b.lhs()))
                return fire(Expr::binary(
                    k, Expr::constant(a.constant_value() * b.lhs().constant_value()), b.rhs()));
            break;
        case ExprKind::Div:
            if (a.is_constant(0.0)) return fire(Expr::constant(0.0));
            if (b.is_constant(1.0)) return fire(a);
            break;
        case ExprKind::Pow:
            if (b.is_constant(1.0)) return fire(a);
            if (b.is_constant(0.0) && !a.is_constant(0.0)) return fire(Expr::constant(1.0));
            break;
        default:
            break;
    }
    return Expr::binary(k, std::move(a), std::move(b));
}

}  // namespace

Expr simplify(const Expr& e) {
    Expr cur = e;
    for (;;) {
        bool changed = false;
        Expr next = rewrite(cur, changed);
        if (!changed) return next;
        cur = std::move(next);
    }
}

// ---------------------------------------------------------------------------
// differentiation

namespace {

Expr diff(const Expr& e, const std::string& var) {
    using K = ExprKind;
    switch (e.kind()) {
        case K::Constant:
            return Expr::constant(0.0);
        case K::Variable:
            return Expr::constant(e.variable_name() == var ? 1.0 : 0.0);
        case K::Neg:
            return -diff(e.operand(), var);
        case K::Sin:
            return cos(e.operand()) * diff(e.operand(), var);
        case K::Cos:
            return -(sin(e.operand()) * diff(e.operand(), var));
        case K::Tan:
            return diff(e.operand(), var) / pow(cos(e.operand()), Expr::constant(2.0));
        case K::Exp:
            return exp(e.operand()) * diff(e.operand(), var);
        case K::Ln:
            return diff(e.operand(), var) / e.operand();
        case K::Sqrt:
            return diff(e.operand(), var) / (Expr::constant(2.0) * sqrt(e.operand()));
        case K::Add:
            return diff(e.lhs(), var) + diff(e.rhs(), var);
        case K::Sub:
            return diff(e.lhs(), var) - diff(e.rhs(), var);
        case K::Mul:
            return diff(e.lhs(), var) * e.rhs() + e.lhs() * diff(e.rhs(), var);
        case K::Div:
            return (diff(e.lhs(), var) * e.rhs() - e.lhs() * diff(e.rhs(), var)) /
                   pow(e.rhs(), Expr::constant(2.0));
        case K::Pow: {
            const Expr& a = e.lhs();
            const Expr& b = e.rhs();
            if (b.kind() == K::Constant) {
                // c*a^(c-1)*a'; the polynomial rule when c is an integer
                double c = b.constant_value();
                return Expr::constant(c) * pow(a, Expr::constant(c - 1.0)) * diff(a, var);
            }
            // a^b * (b' ln a + b a'/a), valid where a > 0
            return e * (diff(b, var) * ln(a) + b * (diff(a, var) / a));
        }
    }
    throw Error("corrupt expression node");
}

}  // namespace

Expr differentiate(const Expr& e, const std::string& var) { return simplify(diff(e, var)); }

// ---------------------------------------------------------------------------
// printing

namespace {

// Precedence: Add/Sub = 1, Mul/Div = 2, Neg sits between Div and Pow
// (the grammar's factor), Pow = 4, atoms = 5. A constant that renders with a
// leading '-' reparses like a negated factor, so it takes Neg's level.
int print_precedence(const Expr& e) {
    switch (e.kind()) {
        case ExprKind::Add:
        case ExprKind::Sub: return 1;
        case ExprKind::Mul:
        case ExprKind::Div: return 2;
        case ExprKind::Neg: return 3;
        case ExprKind::Pow: return 4;
        case ExprKind::Constant:
            return std::signbit(e.constant_value()) ? 3 : 5;
        default: return 5;
    }
}

void print(const Expr& e, std::string& out) {
    auto wrapped = [&out](const Expr& x, bool parens) {
        if (parens) out += '(';
        print(x, out);
        if (parens) out += ')';
    };
    const int p = print_precedence(e);
    switch (e.kind()) {
        case ExprKind::Constant:
            out += format_double(e.constant_value());
            return;
        case ExprKind::Variable:
            out += e.variable_name();
            return;
        case ExprKind::Neg:
            out += '-';
            // "-(3)" keeps the negation node distinct from a negative literal
            wrapped(e.operand(), print_precedence(e.operand()) <= 3 ||
                                     e.operand().kind() == ExprKind::Constant);
            return;
        case ExprKind::Sin: out += "sin"; break;
        case ExprKind::Cos: out += "cos"; break;
        case ExprKind::Tan: out += "tan"; break;
        case ExprKind::Exp: out += "exp"; break;
        case ExprKind::Ln: out += "ln"; break;
        case ExprKind::Sqrt: out += "sqrt"; break;
        case ExprKind::Add:
        case ExprKind::Sub:
        case ExprKind::Mul:
        case ExprKind::Div:
            // left-associative: parenthesize an equal-precedence right child
            wrapped(e.lhs(), print_precedence(e.lhs()) < p);
            out += (e.kind() == ExprKind::Add   ? '+'
                    : e.kind() == ExprKind::Sub ? '-'
                    : e.kind() == ExprKind::Mul ? '*'
                                                : '/');
            wrapped(e.rhs(), print_precedence(e.rhs()) <= p);
            return;
        case ExprKind::Pow:
            // right-associative; the exponent slot accepts a leading minus
            wrapped(e.lhs(), print_precedence(e.lhs()) <= p);
            out += '^';
            wrapped(e.rhs(), print_precedence(e.rhs()) < 3);
            return;
    }
    out += '(';
    print(e.operand(), out);
    out += ')';
}

}  // namespace

std::string to_string(const Expr& e) {
    std::string out;
    print(e, out);
    return out;
}

bool is_identifier(const std::string& s) {
    if (s.empty()) return false;
    if (!(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
    for (char c : s)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
    return true;
}

}  // namespace herglotz::symexpr
