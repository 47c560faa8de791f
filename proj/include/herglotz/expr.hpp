#pragma once

#include <cstddef>
#include <memory>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "herglotz/errors.hpp"

namespace herglotz::symexpr {

enum class ExprKind {
    Constant,
    Variable,
    // unary
    Neg,
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
    // binary
    Add,
    Sub,
    Mul,
    Div,
    Pow,
};

bool is_unary(ExprKind k);
bool is_binary(ExprKind k);

/// Immutable expression tree over named variables. Copies share structure;
/// all operations on Expr are pure, so values can be shared across threads.
class Expr {
public:
    Expr() : Expr(constant(0.0)) {}

    static Expr constant(double value);
    static Expr variable(std::string name);
    static Expr unary(ExprKind k, Expr operand);
    static Expr binary(ExprKind k, Expr lhs, Expr rhs);

    ExprKind kind() const { return node_->kind; }
    double constant_value() const;
    const std::string& variable_name() const;
    Expr operand() const;  // unary child
    Expr lhs() const;
    Expr rhs() const;

    /// Structural equality (same shape, same names, identical constants).
    bool same_as(const Expr& other) const;

    bool is_constant(double value) const {
        return kind() == ExprKind::Constant && constant_value() == value;
    }

private:
    struct Node;
    explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

    struct Node {
        ExprKind kind;
        double value = 0.0;     // Constant
        std::string name;       // Variable
        std::shared_ptr<const Node> a, b;
    };
    std::shared_ptr<const Node> node_;
};

// Convenience constructors used when assembling systems in code.
Expr operator+(Expr a, Expr b);
Expr operator-(Expr a, Expr b);
Expr operator*(Expr a, Expr b);
Expr operator/(Expr a, Expr b);
Expr operator-(Expr a);
Expr pow(Expr base, Expr exponent);
Expr sin(Expr a);
Expr cos(Expr a);
Expr tan(Expr a);
Expr exp(Expr a);
Expr ln(Expr a);
Expr sqrt(Expr a);

/// Map from variable name to value. Lookup of an absent name is an error,
/// never a default.
class Binding {
public:
    Binding() = default;

    void set(const std::string& name, double value) { values_[name] = value; }
    bool has(const std::string& name) const { return values_.count(name) != 0; }
    double get(const std::string& name) const;  // throws UnboundVariableError
    std::size_t size() const { return values_.size(); }
    const std::unordered_map<std::string, double>& values() const { return values_; }

private:
    std::unordered_map<std::string, double> values_;
};

struct SyntaxError : Error {
    SyntaxError(const std::string& what, std::size_t offset);
    std::size_t offset;  // byte offset into the parsed text
};

struct UndeclaredIdentifierError : Error {
    UndeclaredIdentifierError(const std::string& name, std::size_t offset);
    std::string name;
    std::size_t offset;
};

struct UnboundVariableError : Error {
    explicit UnboundVariableError(const std::string& name);
    std::string name;
};

struct EvalDomainError : Error {
    EvalDomainError(const std::string& what, const std::string& subexpression);
    std::string subexpression;  // rendering of the offending subtree
};

/// Parse `text` against the engine grammar:
///   expr   := term (("+"|"-") term)*
///   term   := factor (("*"|"/") factor)*
///   factor := ("-")? power
///   power  := atom ("^" factor)?
///   atom   := number | ident | ident "(" expr ")" | "(" expr ")"
/// Functions: sin cos tan exp ln sqrt. Every other identifier must be
/// declared. "^" binds tighter than unary minus; whitespace is insignificant.
Expr parse_expr(const std::string& text, const std::set<std::string>& declared_vars);

/// Partial derivative by structural rules, simplified. Variables other than
/// `var` (parameters included) are treated as constants.
Expr differentiate(const Expr& e, const std::string& var);

/// Constant folding plus the identity rules x+0, x*1, x*0, x^1, x^0, 0/x,
/// -(-x), applied bottom-up to a fixpoint. Division by the literal constant 0
/// is left as-is and surfaces at evaluation time.
Expr simplify(const Expr& e);

/// IEEE double evaluation. Domain violations (ln of a non-positive value,
/// division by zero, 0^negative, negative base with fractional exponent,
/// sqrt of a negative) throw EvalDomainError naming the subexpression.
double eval(const Expr& e, const Binding& binding);

/// Render with minimal parentheses; parse_expr(to_string(e)) reproduces the
/// tree structurally. Numbers use 17 significant digits.
std::string to_string(const Expr& e);

std::set<std::string> free_variables(const Expr& e);

bool is_identifier(const std::string& s);

/// Number rendering shared by the printer, scenario save and the CSV writer.
std::string format_double(double v);

}  // namespace herglotz::symexpr
