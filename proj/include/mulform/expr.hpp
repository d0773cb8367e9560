#pragma once

// Coefficient expressions: an immutable expression tree with exact symbolic
// partial derivatives, a recursive-descent parser and a compiled evaluator.
//
// Grammar (see docs/grammar.md):
//   expr    := term (('+' | '-') term)*
//   term    := power (('*' | '/') power)*
//   power   := unary ('^' integer)?
//   unary   := '-' unary | primary
//   primary := number | identifier | call | '(' expr ')'
//   call    := ('sin'|'cos'|'exp'|'log'|'sqrt') '(' expr ')' | 'pow' '(' expr ',' integer ')'
//
// Unary minus binds tighter than '^', so "-x1^2" is (-x1)^2.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mulform {

enum class Op : std::uint8_t { Const, Var, Add, Sub, Mul, Div, Neg, Sin, Cos, Exp, Log, Sqrt, Pow };

struct ExprNode;

class Expr {
 public:
  Expr();  // the constant 0
  Expr(double value);  // NOLINT(google-explicit-constructor): literals read naturally

  static Expr constant(double value);
  static Expr variable(int index);

  Op op() const;
  double constant_value() const;  // Op::Const only
  int variable_index() const;     // Op::Var only
  int exponent() const;           // Op::Pow only
  Expr lhs() const;  // first operand
  Expr rhs() const;  // second operand (binary ops)

  bool is_constant() const { return op() == Op::Const; }
  bool is_zero() const;
  bool is_one() const;

  /// Largest variable index referenced, or -1 for constant expressions.
  int max_variable() const;

  /// Recursive evaluation. Throws DomainError on log/sqrt/division domain violations.
  double eval(std::span<const double> vars) const;

  std::size_t structural_hash() const;
  const ExprNode* node() const { return node_.get(); }

  friend Expr operator+(const Expr& a, const Expr& b);
  friend Expr operator-(const Expr& a, const Expr& b);
  friend Expr operator*(const Expr& a, const Expr& b);
  friend Expr operator/(const Expr& a, const Expr& b);
  friend Expr operator-(const Expr& a);

  Expr& operator+=(const Expr& b) { return *this = *this + b; }
  Expr& operator-=(const Expr& b) { return *this = *this - b; }
  Expr& operator*=(const Expr& b) { return *this = *this * b; }

 private:
  explicit Expr(std::shared_ptr<const ExprNode> node) : node_(std::move(node)) {}
  friend struct ExprAccess;

  std::shared_ptr<const ExprNode> node_;
};

struct ExprNode {
  Op op = Op::Const;
  double value = 0.0;  // Const
  int index = 0;       // Var index or Pow exponent
  std::shared_ptr<const ExprNode> a;
  std::shared_ptr<const ExprNode> b;
  std::size_t hash = 0;
  int max_var = -1;
};

Expr sin(const Expr& a);
Expr cos(const Expr& a);
Expr exp(const Expr& a);
Expr log(const Expr& a);
Expr sqrt(const Expr& a);
Expr pow(const Expr& a, int exponent);

bool structurally_equal(const Expr& a, const Expr& b);

/// Exact symbolic derivative with respect to variable `var` (constant folding only).
Expr partial(const Expr& e, int var);

/// Names for expression variables. Chart variables are x1..xn (indices 0..n-1)
/// followed by y1..yr (indices n..n+r-1).
class VariableSet {
 public:
  VariableSet() = default;
  explicit VariableSet(std::vector<std::string> names);

  static VariableSet chart(int base_dim, int rank);

  int size() const { return static_cast<int>(names_.size()); }
  const std::string& name(int index) const { return names_.at(static_cast<std::size_t>(index)); }
  /// Index of `name`, or -1 when it is not declared.
  int find(std::string_view name) const;

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> index_;
};

/// Parse `source` against the declared variables. Throws ParseError.
Expr parse(std::string_view source, const VariableSet& vars);

/// Printer whose output parses back to a structurally equal tree.
std::string to_string(const Expr& e, const VariableSet& vars);

/// Flat evaluation tape for a batch of expressions, with common subexpressions
/// shared. Immutable after construction; `run` is safe from many threads.
class Program {
 public:
  Program() = default;
  explicit Program(const std::vector<Expr>& outputs);

  std::size_t output_count() const { return outputs_.size(); }
  int required_variables() const { return required_vars_; }

  /// Evaluates every output. `vars` must hold at least `required_variables()` entries.
  void run(std::span<const double> vars, std::span<double> out) const;

 private:
  struct Instr {
    Op op;
    int a;
    int b;
    int index;
    double value;
  };
  std::vector<Instr> code_;
  std::vector<int> outputs_;
  int required_vars_ = 0;
};

}  // namespace mulform
