#include "mulform/expr.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <functional>
#include <map>
#include <tuple>

#include "mulform/errors.hpp"

namespace mulform {

struct ExprAccess {
  static Expr wrap(std::shared_ptr<const ExprNode> n) { return Expr(std::move(n)); }
  static const std::shared_ptr<const ExprNode>& ptr(const Expr& e) { return e.node_; }
};

namespace {

using NodePtr = std::shared_ptr<const ExprNode>;

std::size_t mix(std::size_t h, std::size_t v) {
  return h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
}

NodePtr make_node(Op op, double value, int index, NodePtr a, NodePtr b) {
  auto n = std::make_shared<ExprNode>();
  n->op = op;
  n->value = value;
  n->index = index;
  std::size_t h = mix(0x51ed27ULL, static_cast<std::size_t>(op));
  h = mix(h, std::bit_cast<std::uint64_t>(value == 0.0 ? 0.0 : value));
  h = mix(h, static_cast<std::size_t>(index));
  int mv = op == Op::Var ? index : -1;
  if (a) {
    h = mix(h, a->hash);
    mv = std::max(mv, a->max_var);
  }
  if (b) {
    h = mix(h, b->hash);
    mv = std::max(mv, b->max_var);
  }
  n->hash = h;
  n->max_var = mv;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}

const NodePtr& zero_node() {
  static const NodePtr zero = make_node(Op::Const, 0.0, 0, nullptr, nullptr);
  return zero;
}

Expr wrap(NodePtr n) { return ExprAccess::wrap(std::move(n)); }
const NodePtr& ptr(const Expr& e) { return ExprAccess::ptr(e); }

double checked_unary(Op op, double x, int exponent) {
  switch (op) {
    case Op::Neg:
      return -x;
    case Op::Sin:
      return std::sin(x);
    case Op::Cos:
      return std::cos(x);
    case Op::Exp:
      return std::exp(x);
    case Op::Log:
      if (!(x > 0.0)) throw DomainError("log of non-positive value " + std::to_string(x));
      return std::log(x);
    case Op::Sqrt:
      if (!(x >= 0.0)) throw DomainError("sqrt of negative value " + std::to_string(x));
      return std::sqrt(x);
    case Op::Pow:
      if (exponent < 0 && x == 0.0) throw DomainError("negative power of zero");
      return std::pow(x, exponent);
    default:
      break;
  }
  throw Error("internal: not a unary op");
}

double checked_binary(Op op, double a, double b) {
  switch (op) {
    case Op::Add:
      return a + b;
    case Op::Sub:
      return a - b;
    case Op::Mul:
      return a * b;
    case Op::Div:
      if (b == 0.0) throw DomainError("division by zero");
      return a / b;
    default:
      break;
  }
  throw Error("internal: not a binary op");
}

Expr make_unary(Op op, const Expr& a, int exponent = 0) {
  if (a.is_constant()) {
    // Fold only when the value is well defined; otherwise keep the node so the
    // domain error surfaces at evaluation time.
    try {
      return Expr::constant(checked_unary(op, a.constant_value(), exponent));
    } catch (const DomainError&) {
    }
  }
  if (op == Op::Neg && a.op() == Op::Neg) return a.lhs();
  if (op == Op::Pow) {
    if (exponent == 0) return Expr(1.0);
    if (exponent == 1) return a;
  }
  return wrap(make_node(op, 0.0, exponent, ptr(a), nullptr));
}

Expr make_binary(Op op, const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant()) {
    try {
      return Expr::constant(checked_binary(op, a.constant_value(), b.constant_value()));
    } catch (const DomainError&) {
    }
  }
  switch (op) {
    case Op::Add:
      if (a.is_zero()) return b;
      if (b.is_zero()) return a;
      break;
    case Op::Sub:
      if (b.is_zero()) return a;
      if (a.is_zero()) return -b;
      break;
    case Op::Mul:
      if (a.is_zero() || b.is_zero()) return Expr();
      if (a.is_one()) return b;
      if (b.is_one()) return a;
      break;
    case Op::Div:
      if (b.is_one()) return a;
      break;
    default:
      break;
  }
  return wrap(make_node(op, 0.0, 0, ptr(a), ptr(b)));
}

}  // namespace

Expr::Expr() : node_(zero_node()) {}
Expr::Expr(double value) : node_(value == 0.0 ? zero_node() : make_node(Op::Const, value, 0, nullptr, nullptr)) {}

Expr Expr::constant(double value) { return Expr(value); }
Expr Expr::variable(int index) {
  if (index < 0) throw Error("negative variable index");
  return Expr(make_node(Op::Var, 0.0, index, nullptr, nullptr));
}

Op Expr::op() const { return node_->op; }
double Expr::constant_value() const { return node_->value; }
int Expr::variable_index() const { return node_->index; }
int Expr::exponent() const { return node_->index; }
Expr Expr::lhs() const { return node_->a ? Expr(node_->a) : Expr(); }
Expr Expr::rhs() const { return node_->b ? Expr(node_->b) : Expr(); }
bool Expr::is_zero() const { return node_->op == Op::Const && node_->value == 0.0; }
bool Expr::is_one() const { return node_->op == Op::Const && node_->value == 1.0; }
int Expr::max_variable() const { return node_->max_var; }
std::size_t Expr::structural_hash() const { return node_->hash; }

double Expr::eval(std::span<const double> vars) const {
  const ExprNode& n = *node_;
  switch (n.op) {
    case Op::Const:
      return n.value;
    case Op::Var:
      if (static_cast<std::size_t>(n.index) >= vars.size()) throw ShapeError("variable index out of range");
      return vars[static_cast<std::size_t>(n.index)];
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div:
      return checked_binary(n.op, lhs().eval(vars), rhs().eval(vars));
    default:
      return checked_unary(n.op, lhs().eval(vars), n.index);
  }
}

Expr operator+(const Expr& a, const Expr& b) { return make_binary(Op::Add, a, b); }
Expr operator-(const Expr& a, const Expr& b) { return make_binary(Op::Sub, a, b); }
Expr operator*(const Expr& a, const Expr& b) { return make_binary(Op::Mul, a, b); }
Expr operator/(const Expr& a, const Expr& b) { return make_binary(Op::Div, a, b); }
Expr operator-(const Expr& a) { return make_unary(Op::Neg, a); }

Expr sin(const Expr& a) { return make_unary(Op::Sin, a); }
Expr cos(const Expr& a) { return make_unary(Op::Cos, a); }
Expr exp(const Expr& a) { return make_unary(Op::Exp, a); }
Expr log(const Expr& a) { return make_unary(Op::Log, a); }
Expr sqrt(const Expr& a) { return make_unary(Op::Sqrt, a); }
Expr pow(const Expr& a, int exponent) { return make_unary(Op::Pow, a, exponent); }

bool structurally_equal(const Expr& a, const Expr& b) {
  const ExprNode* x = a.node();
  const ExprNode* y = b.node();
  if (x == y) return true;
  if (x->hash != y->hash || x->op != y->op || x->index != y->index) return false;
  if (x->op == Op::Const) return x->value == y->value;
  if (x->op == Op::Var) return true;
  if (!structurally_equal(a.lhs(), b.lhs())) return false;
  return !x->b || structurally_equal(a.rhs(), b.rhs());
}

Expr partial(const Expr& e, int var) {
  if (e.max_variable() < var) return Expr();
  const Expr a = e.lhs();
  switch (e.op()) {
    case Op::Const:
      return Expr();
    case Op::Var:
      return Expr(e.variable_index() == var ? 1.0 : 0.0);
    case Op::Add:
      return partial(a, var) + partial(e.rhs(), var);
    case Op::Sub:
      return partial(a, var) - partial(e.rhs(), var);
    case Op::Mul: {
      const Expr b = e.rhs();
      return partial(a, var) * b + a * partial(b, var);
    }
    case Op::Div: {
      const Expr b = e.rhs();
      const Expr da = partial(a, var);
      const Expr db = partial(b, var);
      if (db.is_zero()) return da / b;
      return da / b - a * db / (b * b);
    }
    case Op::Neg:
      return -partial(a, var);
    case Op::Sin:
      return cos(a) * partial(a, var);
    case Op::Cos:
      return -(sin(a) * partial(a, var));
    case Op::Exp:
      return e * partial(a, var);
    case Op::Log:
      return partial(a, var) / a;
    case Op::Sqrt:
      return partial(a, var) / (Expr(2.0) * e);
    case Op::Pow: {
      const int k = e.exponent();
      return Expr(static_cast<double>(k)) * pow(a, k - 1) * partial(a, var);
    }
  }
  return Expr();
}

// ---------------------------------------------------------------------------
// Variables

VariableSet::VariableSet(std::vector<std::string> names) : names_(std::move(names)) {
  for (std::size_t i = 0; i < names_.size(); ++i) index_.emplace(names_[i], static_cast<int>(i));
}

VariableSet VariableSet::chart(int base_dim, int rank) {
  std::vector<std::string> names;
  for (int i = 1; i <= base_dim; ++i) names.push_back("x" + std::to_string(i));
  for (int j = 1; j <= rank; ++j) names.push_back("y" + std::to_string(j));
  return VariableSet(std::move(names));
}

int VariableSet::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? -1 : it->second;
}

// ---------------------------------------------------------------------------
// Parser

namespace {

class Parser {
 public:
  Parser(std::string_view src, const VariableSet& vars) : src_(src), vars_(vars) {}

  Expr parse_all() {
    skip_ws();
    if (at_end()) fail("empty expression");
    Expr e = parse_expr();
    skip_ws();
    if (!at_end()) fail(std::string("unexpected '") + peek() + "'");
    return e;
  }

 private:
  std::string_view src_;
  const VariableSet& vars_;
  std::size_t pos_ = 0;

  bool at_end() const { return pos_ >= src_.size(); }
  char peek() const { return at_end() ? '\0' : src_[pos_]; }

  [[noreturn]] void fail(const std::string& msg) const { fail_at(msg, pos_); }

  [[noreturn]] void fail_at(const std::string& msg, std::size_t where) const {
    int line = 1;
    int col = 1;
    for (std::size_t i = 0; i < where && i < src_.size(); ++i) {
      if (src_[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ParseError(msg, line, col);
  }

  void skip_ws() {
    while (!at_end() && (src_[pos_] == ' ' || src_[pos_] == '\t' || src_[pos_] == '\n' || src_[pos_] == '\r')) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (peek() == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c, const char* context) {
    if (!accept(c)) {
      if (at_end()) fail(std::string("expected '") + c + "' " + context + " but reached end of input");
      fail(std::string("expected '") + c + "' " + context);
    }
  }

  Expr parse_expr() {
    Expr lhs = parse_term();
    for (;;) {
      if (accept('+')) {
        lhs = lhs + parse_term();
      } else if (accept('-')) {
        lhs = lhs - parse_term();
      } else {
        return lhs;
      }
    }
  }

  Expr parse_term() {
    Expr lhs = parse_power();
    for (;;) {
      if (accept('*')) {
        lhs = lhs * parse_power();
      } else if (accept('/')) {
        lhs = lhs / parse_power();
      } else {
        return lhs;
      }
    }
  }

  Expr parse_power() {
    Expr base = parse_unary();
    if (accept('^')) {
      skip_ws();
      bool paren = accept('(');
      int k = parse_integer();
      if (paren) expect(')', "after exponent");
      return pow(base, k);
    }
    return base;
  }

  Expr parse_unary() {
    if (accept('-')) return -parse_unary();
    return parse_primary();
  }

  int parse_integer() {
    skip_ws();
    bool neg = false;
    if (peek() == '-') {
      neg = true;
      ++pos_;
      skip_ws();
    }
    std::size_t start = pos_;
    while (!at_end() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    if (start == pos_) fail("expected integer exponent");
    if (!at_end() && (src_[pos_] == '.' || src_[pos_] == 'e' || src_[pos_] == 'E')) fail_at("exponent must be an integer", start);
    int value = 0;
    auto res = std::from_chars(src_.data() + start, src_.data() + pos_, value);
    if (res.ec != std::errc()) fail_at("integer exponent out of range", start);
    return neg ? -value : value;
  }

  Expr parse_number() {
    std::size_t start = pos_;
    while (!at_end() && (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.')) ++pos_;
    if (!at_end() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t save = pos_;
      ++pos_;
      if (!at_end() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
      if (at_end() || !std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
        pos_ = save;
      } else {
        while (!at_end() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
      }
    }
    double value = 0.0;
    auto res = std::from_chars(src_.data() + start, src_.data() + pos_, value);
    if (res.ec != std::errc() || res.ptr != src_.data() + pos_) fail_at("malformed number", start);
    return Expr(value);
  }

  Expr parse_primary() {
    skip_ws();
    if (at_end()) fail("unexpected end of input");
    const char c = peek();
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (c == '(') {
      std::size_t open = pos_;
      ++pos_;
      Expr inner = parse_expr();
      skip_ws();
      if (at_end()) fail_at("unclosed '('", open);
      expect(')', "to close '('");
      return inner;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos_;
      while (!at_end() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) ++pos_;
      std::string_view name = src_.substr(start, pos_ - start);
      skip_ws();
      if (peek() == '(') return parse_call(name, start);
      int idx = vars_.find(name);
      if (idx < 0) fail_at("unknown identifier '" + std::string(name) + "'", start);
      return Expr::variable(idx);
    }
    fail(std::string("unexpected '") + c + "'");
  }

  Expr parse_call(std::string_view name, std::size_t start) {
    static const std::map<std::string, Op, std::less<>> unary = {
        {"sin", Op::Sin}, {"cos", Op::Cos}, {"exp", Op::Exp}, {"log", Op::Log}, {"sqrt", Op::Sqrt}};
    expect('(', "after function name");
    if (name == "pow") {
      Expr base = parse_expr();
      if (!accept(',')) fail_at("function 'pow' expects 2 arguments", start);
      int k = parse_integer();
      if (accept(',')) fail_at("function 'pow' expects 2 arguments", start);
      expect(')', "to close call");
      return pow(base, k);
    }
    auto it = unary.find(name);
    if (it == unary.end()) fail_at("unknown function '" + std::string(name) + "'", start);
    Expr arg = parse_expr();
    if (accept(',')) fail_at("function '" + std::string(name) + "' expects 1 argument", start);
    expect(')', "to close call");
    switch (it->second) {
      case Op::Sin:
        return sin(arg);
      case Op::Cos:
        return cos(arg);
      case Op::Exp:
        return exp(arg);
      case Op::Log:
        return log(arg);
      default:
        return sqrt(arg);
    }
  }
};

int precedence(const Expr& e) {
  switch (e.op()) {
    case Op::Add:
    case Op::Sub:
      return 1;
    case Op::Mul:
    case Op::Div:
      return 2;
    case Op::Pow:
      return 3;
    case Op::Neg:
      return 4;
    case Op::Const:
      return e.constant_value() < 0.0 ? 0 : 5;
    default:
      return 5;
  }
}

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void print(const Expr& e, const VariableSet& vars, std::string& out);

void print_child(const Expr& child, int min_prec, const VariableSet& vars, std::string& out) {
  if (precedence(child) < min_prec) {
    out += '(';
    print(child, vars, out);
    out += ')';
  } else {
    print(child, vars, out);
  }
}

void print(const Expr& e, const VariableSet& vars, std::string& out) {
  switch (e.op()) {
    case Op::Const:
      out += format_number(e.constant_value());
      return;
    case Op::Var:
      out += e.variable_index() < vars.size() ? vars.name(e.variable_index()) : "v" + std::to_string(e.variable_index());
      return;
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div: {
      const int p = precedence(e);
      print_child(e.lhs(), p, vars, out);
      out += e.op() == Op::Add ? " + " : e.op() == Op::Sub ? " - " : e.op() == Op::Mul ? "*" : "/";
      print_child(e.rhs(), p + 1, vars, out);
      return;
    }
    case Op::Neg:
      out += '-';
      print_child(e.lhs(), 4, vars, out);
      return;
    case Op::Pow:
      print_child(e.lhs(), 4, vars, out);
      out += '^';
      out += e.exponent() < 0 ? "(" + std::to_string(e.exponent()) + ")" : std::to_string(e.exponent());
      return;
    default: {
      static const char* names[] = {"", "", "", "", "", "", "", "sin", "cos", "exp", "log", "sqrt"};
      out += names[static_cast<int>(e.op())];
      out += '(';
      print(e.lhs(), vars, out);
      out += ')';
      return;
    }
  }
}

}  // namespace

Expr parse(std::string_view source, const VariableSet& vars) { return Parser(source, vars).parse_all(); }

std::string to_string(const Expr& e, const VariableSet& vars) {
  std::string out;
  print(e, vars, out);
  return out;
}

// ---------------------------------------------------------------------------
// Compiled evaluation

Program::Program(const std::vector<Expr>& outputs) {
  using Key = std::tuple<int, int, int, int, std::uint64_t>;
  std::map<Key, int> interned;
  std::unordered_map<const ExprNode*, int> visited;

  std::function<int(const Expr&)> emit = [&](const Expr& e) -> int {
    if (auto it = visited.find(e.node()); it != visited.end()) return it->second;
    int a = -1;
    int b = -1;
    const ExprNode& n = *e.node();
    if (n.a) a = emit(e.lhs());
    if (n.b) b = emit(e.rhs());
    Key key{static_cast<int>(n.op), a, b, n.index, std::bit_cast<std::uint64_t>(n.value)};
    int reg;
    if (auto it = interned.find(key); it != interned.end()) {
      reg = it->second;
    } else {
      reg = static_cast<int>(code_.size());
      code_.push_back(Instr{n.op, a, b, n.index, n.value});
      interned.emplace(key, reg);
      if (n.op == Op::Var) required_vars_ = std::max(required_vars_, n.index + 1);
    }
    visited.emplace(e.node(), reg);
    return reg;
  };

  outputs_.reserve(outputs.size());
  for (const Expr& e : outputs) outputs_.push_back(emit(e));
}

void Program::run(std::span<const double> vars, std::span<double> out) const {
  if (vars.size() < static_cast<std::size_t>(required_vars_)) throw ShapeError("Program::run: too few variables");
  if (out.size() < outputs_.size()) throw ShapeError("Program::run: output span too small");
  thread_local std::vector<double> regs;
  if (regs.size() < code_.size()) regs.resize(code_.size());
  double* r = regs.data();
  const std::size_t count = code_.size();
  for (std::size_t i = 0; i < count; ++i) {
    const Instr& in = code_[i];
    switch (in.op) {
      case Op::Const:
        r[i] = in.value;
        break;
      case Op::Var:
        r[i] = vars[static_cast<std::size_t>(in.index)];
        break;
      case Op::Add:
        r[i] = r[in.a] + r[in.b];
        break;
      case Op::Sub:
        r[i] = r[in.a] - r[in.b];
        break;
      case Op::Mul:
        r[i] = r[in.a] * r[in.b];
        break;
      case Op::Neg:
        r[i] = -r[in.a];
        break;
      case Op::Div:
        r[i] = checked_binary(Op::Div, r[in.a], r[in.b]);
        break;
      case Op::Pow: {
        const int k = in.index;
        const double x = r[in.a];
        if (k == 2) {
          r[i] = x * x;
        } else {
          r[i] = checked_unary(Op::Pow, x, k);
        }
        break;
      }
      default:
        r[i] = checked_unary(in.op, r[in.a], in.index);
        break;
    }
  }
  for (std::size_t k = 0; k < outputs_.size(); ++k) out[k] = r[outputs_[k]];
}

}  // namespace mulform
