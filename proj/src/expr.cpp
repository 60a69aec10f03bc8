#include "cgf/expr.hpp"

#include "cgf/quadrature.hpp"

#include <algorithm>
#include <array>
#include <optional>
#include <cctype>
#include <charconv>
#include <cmath>
#include <numbers>
#include <sstream>

namespace cgf {

struct Expr::Node {
  Op op = Op::Const;
  double value = 0.0;
  int order = 0;
  std::string name;
  std::vector<Expr> args;
};

Expr::Expr() : Expr(0.0) {}

Expr::Expr(double c) {
  auto n = std::make_shared<Node>();
  n->value = c;
  node_ = std::move(n);
}

Expr::Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

Expr Expr::constant(double c) { return Expr(c); }

Expr Expr::variable(std::string name) {
  auto n = std::make_shared<Node>();
  n->op = Op::Var;
  n->name = std::move(name);
  return Expr(std::shared_ptr<const Node>(std::move(n)));
}

Expr Expr::make(Op op, std::vector<Expr> args, int order) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->order = order;
  n->args = std::move(args);
  return Expr(std::shared_ptr<const Node>(std::move(n)));
}

Op Expr::op() const { return node_->op; }
double Expr::value() const { return node_->value; }
const std::string& Expr::name() const { return node_->name; }
int Expr::order() const { return node_->order; }
std::size_t Expr::arity() const { return node_->args.size(); }
const Expr& Expr::arg(std::size_t i) const { return node_->args.at(i); }

// ---------------------------------------------------------------------------
// scalar kernels

double flat_fn(double t, int order) {
  if (!(t > 0.0)) return 0.0;
  if (order == 0) return std::exp(-1.0 / t);
  return std::exp(-1.0 / t - order * std::log(t));
}

double step_fn(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  const double a = flat_fn(t, 0);
  const double b = flat_fn(1.0 - t, 0);
  return a / (a + b);
}

double nu_fn(double t) {
  if (t <= 0.5) return t;
  if (t >= 1.5) return 1.0;
  // nu' = 1 - step(t - 1/2); the integral over [1/2, 3/2] is exactly 1/2.
  auto slope = [](double s) { return 1.0 - step_fn(s - 0.5); };
  if (t <= 1.0) return 0.5 + integrate<double>(slope, 0.5, t, 8, 16);
  return 1.0 - integrate<double>(slope, t, 1.5, 8, 16);
}

namespace {

double apply_unary(Op op, double a, int order) {
  switch (op) {
    case Op::Neg: return -a;
    case Op::Sin: return std::sin(a);
    case Op::Cos: return std::cos(a);
    case Op::Exp: return std::exp(a);
    case Op::Log: return a > 0.0 ? std::log(a) : std::nan("");
    case Op::Sqrt: return a >= 0.0 ? std::sqrt(a) : std::nan("");
    case Op::Tanh: return std::tanh(a);
    case Op::Flat: return flat_fn(a, order);
    case Op::Step: return step_fn(a);
    case Op::Nu: return nu_fn(a);
    case Op::Abs: return std::abs(a);
    case Op::Sgn: return a > 0.0 ? 1.0 : (a < 0.0 ? -1.0 : 0.0);
    default: return std::nan("");
  }
}

double apply_binary(Op op, double a, double b) {
  switch (op) {
    case Op::Add: return a + b;
    case Op::Sub: return a - b;
    case Op::Mul: return a * b;
    case Op::Div: return b != 0.0 ? a / b : std::nan("");
    case Op::Pow:
      if (a == 0.0 && b < 0.0) return std::nan("");
      return std::pow(a, b);
    case Op::Sabs: return std::sqrt(a * a + b * b);
    default: return std::nan("");
  }
}

bool is_binary(Op op) {
  return op == Op::Add || op == Op::Sub || op == Op::Mul || op == Op::Div || op == Op::Pow ||
         op == Op::Sabs;
}

struct Builtin {
  const char* name;
  Op op;
  int arity;
  bool smooth;
};

constexpr std::array<Builtin, 13> kBuiltins{{
    {"sin", Op::Sin, 1, true},
    {"cos", Op::Cos, 1, true},
    {"exp", Op::Exp, 1, true},
    {"log", Op::Log, 1, true},
    {"sqrt", Op::Sqrt, 1, true},
    {"tanh", Op::Tanh, 1, true},
    {"sabs", Op::Sabs, 2, true},
    {"pow", Op::Pow, 2, true},
    {"flat", Op::Flat, 1, true},
    {"step", Op::Step, 1, true},
    {"nu", Op::Nu, 1, true},
    {"abs", Op::Abs, 1, false},
    {"sgn", Op::Sgn, 1, false},
}};

const char* builtin_name(Op op) {
  for (const auto& b : kBuiltins)
    if (b.op == op) return b.name;
  return "?";
}

// Folds a node whose arguments are all constants; keeps it symbolic when the
// result would not be finite.
std::optional<Expr> fold(Op op, const std::vector<Expr>& args, int order) {
  for (const auto& a : args)
    if (!a.is_constant()) return std::nullopt;
  double v;
  if (args.size() == 1)
    v = apply_unary(op, args[0].value(), order);
  else
    v = apply_binary(op, args[0].value(), args[1].value());
  if (!std::isfinite(v)) return std::nullopt;
  return Expr(v);
}

Expr unary(Op op, const Expr& a, int order = 0) {
  if (auto f = fold(op, {a}, order)) return *f;
  return Expr::make(op, {a}, order);
}

}  // namespace

Expr operator-(const Expr& a) {
  if (a.is_constant()) return Expr(-a.value());
  if (a.op() == Op::Neg) return a.arg(0);
  return Expr::make(Op::Neg, {a});
}

Expr operator+(const Expr& a, const Expr& b) {
  if (auto f = fold(Op::Add, {a, b}, 0)) return *f;
  if (a.is_constant(0.0)) return b;
  if (b.is_constant(0.0)) return a;
  return Expr::make(Op::Add, {a, b});
}

Expr operator-(const Expr& a, const Expr& b) {
  if (auto f = fold(Op::Sub, {a, b}, 0)) return *f;
  if (b.is_constant(0.0)) return a;
  if (a.is_constant(0.0)) return -b;
  return Expr::make(Op::Sub, {a, b});
}

Expr operator*(const Expr& a, const Expr& b) {
  if (auto f = fold(Op::Mul, {a, b}, 0)) return *f;
  if (a.is_constant(0.0) || b.is_constant(0.0)) return Expr(0.0);
  if (a.is_constant(1.0)) return b;
  if (b.is_constant(1.0)) return a;
  if (a.is_constant(-1.0)) return -b;
  if (b.is_constant(-1.0)) return -a;
  if (b.op() == Op::Div && b.arg(0).is_constant(1.0)) return a / b.arg(1);
  if (a.op() == Op::Div && a.arg(0).is_constant(1.0)) return b / a.arg(1);
  return Expr::make(Op::Mul, {a, b});
}

Expr operator/(const Expr& a, const Expr& b) {
  if (auto f = fold(Op::Div, {a, b}, 0)) return *f;
  if (a.is_constant(0.0) && !b.is_constant()) return Expr(0.0);
  if (b.is_constant(1.0)) return a;
  return Expr::make(Op::Div, {a, b});
}

Expr pow(const Expr& base, const Expr& exponent) {
  if (auto f = fold(Op::Pow, {base, exponent}, 0)) return *f;
  if (exponent.is_constant(1.0)) return base;
  if (exponent.is_constant(0.0)) return Expr(1.0);
  return Expr::make(Op::Pow, {base, exponent});
}

Expr sin(const Expr& a) { return unary(Op::Sin, a); }
Expr cos(const Expr& a) { return unary(Op::Cos, a); }
Expr exp(const Expr& a) { return unary(Op::Exp, a); }
Expr log(const Expr& a) { return unary(Op::Log, a); }
Expr sqrt(const Expr& a) { return unary(Op::Sqrt, a); }
Expr tanh(const Expr& a) { return unary(Op::Tanh, a); }
Expr flat(const Expr& t, int order) { return unary(Op::Flat, t, order); }
Expr step(const Expr& t) { return unary(Op::Step, t); }
Expr nu(const Expr& t) { return unary(Op::Nu, t); }

Expr sabs(const Expr& a, const Expr& delta) {
  if (auto f = fold(Op::Sabs, {a, delta}, 0)) return *f;
  return Expr::make(Op::Sabs, {a, delta});
}

// ---------------------------------------------------------------------------
// errors

ParseError::ParseError(const std::string& what, std::size_t position)
    : Error(what + " at position " + std::to_string(position)), position_(position) {}

DomainFault::DomainFault(const std::string& what, std::string subtree)
    : Error(what + " in '" + subtree + "'"), subtree_(std::move(subtree)) {}

std::vector<std::string> net_variables(int m) {
  std::vector<std::string> v;
  for (int i = 1; i <= m; ++i) v.push_back("x" + std::to_string(i));
  v.emplace_back("eps");
  return v;
}

std::vector<std::string> ambient_variables(int s) {
  std::vector<std::string> v;
  for (int i = 1; i <= s; ++i) v.push_back("y" + std::to_string(i));
  return v;
}

// ---------------------------------------------------------------------------
// parser

namespace {

class Parser {
 public:
  Parser(std::string_view src, const ParseOptions& opts) : src_(src), opts_(opts) {
    if (opts_.variables.empty()) {
      for (int i = 1; i <= 9; ++i) {
        vars_.insert("x" + std::to_string(i));
        vars_.insert("y" + std::to_string(i));
      }
      vars_.insert("eps");
    } else {
      vars_.insert(opts_.variables.begin(), opts_.variables.end());
    }
  }

  Expr run() {
    Expr e = expression();
    skip_ws();
    if (pos_ != src_.size()) fail("unexpected '" + std::string(1, src_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, pos_); }

  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }

  Expr expression() {
    Expr lhs = term();
    for (;;) {
      if (accept('+'))
        lhs = Expr::make(Op::Add, {lhs, term()});
      else if (accept('-'))
        lhs = Expr::make(Op::Sub, {lhs, term()});
      else
        return lhs;
    }
  }

  Expr term() {
    Expr lhs = signed_factor();
    for (;;) {
      if (accept('*'))
        lhs = Expr::make(Op::Mul, {lhs, signed_factor()});
      else if (accept('/'))
        lhs = Expr::make(Op::Div, {lhs, signed_factor()});
      else
        return lhs;
    }
  }

  Expr signed_factor() {
    if (accept('-')) {
      Expr operand = signed_factor();
      if (operand.is_constant()) return Expr(-operand.value());
      return Expr::make(Op::Neg, {operand});
    }
    if (accept('+')) return signed_factor();
    return power();
  }

  Expr power() {
    Expr base = primary();
    if (accept('^')) return Expr::make(Op::Pow, {base, signed_factor()});
    return base;
  }

  Expr primary() {
    skip_ws();
    if (pos_ >= src_.size()) fail("unexpected end of input");
    const char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      Expr e = expression();
      expect(')');
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
    fail(std::string("unexpected '") + c + "'");
  }

  Expr number() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() &&
           (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.'))
      ++pos_;
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t p = pos_ + 1;
      if (p < src_.size() && (src_[p] == '+' || src_[p] == '-')) ++p;
      if (p < src_.size() && std::isdigit(static_cast<unsigned char>(src_[p]))) {
        pos_ = p;
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
      }
    }
    double v = 0.0;
    const auto res = std::from_chars(src_.data() + start, src_.data() + pos_, v);
    if (res.ec != std::errc() || res.ptr != src_.data() + pos_) {
      pos_ = start;
      fail("malformed number");
    }
    return Expr(v);
  }

  Expr identifier() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() &&
           (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
      ++pos_;
    const std::string id(src_.substr(start, pos_ - start));
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == '(') {
      ++pos_;
      return call(id, start);
    }
    if (id == "pi") return Expr(std::numbers::pi);
    if (!vars_.count(id)) {
      pos_ = start;
      fail("unknown identifier '" + id + "'");
    }
    return Expr::variable(id);
  }

  Expr call(const std::string& id, std::size_t start) {
    const Builtin* b = nullptr;
    for (const auto& cand : kBuiltins)
      if (id == cand.name) b = &cand;
    if (!b) {
      pos_ = start;
      fail("unknown function '" + id + "'");
    }
    if (!b->smooth && !opts_.allow_nonsmooth) {
      pos_ = start;
      fail("'" + id + "' is not smooth; use sabs(x, delta) in nets");
    }
    std::vector<Expr> args;
    if (!accept(')')) {
      do {
        args.push_back(expression());
      } while (accept(','));
      expect(')');
    }
    int order = 0;
    if (b->op == Op::Flat && args.size() == 2) {
      const Expr& k = args[1];
      if (!k.is_constant() || k.value() < 0 || k.value() != std::floor(k.value())) {
        pos_ = start;
        fail("flat(t, j) needs a non-negative integer literal j");
      }
      order = static_cast<int>(k.value());
      args.pop_back();
    }
    if (static_cast<int>(args.size()) != b->arity) {
      pos_ = start;
      fail("'" + id + "' expects " + std::to_string(b->arity) + " argument(s), got " +
           std::to_string(args.size()));
    }
    return Expr::make(b->op, std::move(args), order);
  }

  std::string_view src_;
  const ParseOptions& opts_;
  std::set<std::string, std::less<>> vars_;
  std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// printer

int level(const Expr& e) {
  switch (e.op()) {
    case Op::Add:
    case Op::Sub: return 1;
    case Op::Mul:
    case Op::Div: return 2;
    case Op::Neg: return 3;
    case Op::Pow: return 4;
    case Op::Const: return e.value() < 0.0 || std::signbit(e.value()) ? 3 : 5;
    default: return 5;
  }
}

std::string format_number(double v) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

void print(const Expr& e, std::ostringstream& out);

void print_child(const Expr& child, int min_level, std::ostringstream& out) {
  const int l = level(child);
  // negations are always bracketed below a binary operator
  if (l < min_level || l == 3) {
    out << '(';
    print(child, out);
    out << ')';
  } else {
    print(child, out);
  }
}

void print(const Expr& e, std::ostringstream& out) {
  switch (e.op()) {
    case Op::Const: out << format_number(e.value()); return;
    case Op::Var: out << e.name(); return;
    case Op::Neg:
      out << '-';
      print_child(e.arg(0), 4, out);
      return;
    case Op::Add:
    case Op::Sub:
      print_child(e.arg(0), 1, out);
      out << (e.op() == Op::Add ? '+' : '-');
      print_child(e.arg(1), 2, out);
      return;
    case Op::Mul:
    case Op::Div:
      print_child(e.arg(0), 2, out);
      out << (e.op() == Op::Mul ? '*' : '/');
      print_child(e.arg(1), 3, out);
      return;
    case Op::Pow:
      print_child(e.arg(0), 5, out);
      out << '^';
      print_child(e.arg(1), 4, out);
      return;
    default: break;
  }
  out << builtin_name(e.op()) << '(';
  for (std::size_t i = 0; i < e.arity(); ++i) {
    if (i) out << ", ";
    print(e.arg(i), out);
  }
  if (e.op() == Op::Flat && e.order() != 0) out << ", " << e.order();
  out << ')';
}

}  // namespace

Expr parse(std::string_view source, const ParseOptions& options) {
  return Parser(source, options).run();
}

std::string to_string(const Expr& e) {
  std::ostringstream out;
  print(e, out);
  return out.str();
}

bool structurally_equal(const Expr& a, const Expr& b) {
  if (a.op() != b.op() || a.arity() != b.arity() || a.order() != b.order()) return false;
  if (a.op() == Op::Const) return a.value() == b.value() || (std::isnan(a.value()) && std::isnan(b.value()));
  if (a.op() == Op::Var) return a.name() == b.name();
  for (std::size_t i = 0; i < a.arity(); ++i)
    if (!structurally_equal(a.arg(i), b.arg(i))) return false;
  return true;
}

namespace {
void collect_vars(const Expr& e, std::set<std::string>& out) {
  if (e.op() == Op::Var) out.insert(e.name());
  for (std::size_t i = 0; i < e.arity(); ++i) collect_vars(e.arg(i), out);
}
}  // namespace

std::set<std::string> free_variables(const Expr& e) {
  std::set<std::string> out;
  collect_vars(e, out);
  return out;
}

bool is_smooth(const Expr& e) {
  if (e.op() == Op::Abs || e.op() == Op::Sgn) return false;
  for (std::size_t i = 0; i < e.arity(); ++i)
    if (!is_smooth(e.arg(i))) return false;
  return true;
}

// ---------------------------------------------------------------------------
// differentiation

namespace {

Expr step_derivative(const Expr& t) {
  const Expr one(1.0);
  const Expr a = flat(t), b = flat(one - t);
  const Expr denom = a + b;
  return (flat(t, 2) * b + a * flat(one - t, 2)) / pow(denom, Expr(2.0));
}

}  // namespace

Expr differentiate(const Expr& e, std::string_view var) {
  switch (e.op()) {
    case Op::Const: return Expr(0.0);
    case Op::Var: return Expr(e.name() == var ? 1.0 : 0.0);
    default: break;
  }
  const Expr& a = e.arg(0);
  const Expr da = differentiate(a, var);
  switch (e.op()) {
    case Op::Neg: return -da;
    case Op::Add: return da + differentiate(e.arg(1), var);
    case Op::Sub: return da - differentiate(e.arg(1), var);
    case Op::Mul: {
      const Expr& b = e.arg(1);
      return da * b + a * differentiate(b, var);
    }
    case Op::Div: {
      const Expr& b = e.arg(1);
      const Expr db = differentiate(b, var);
      if (db.is_constant(0.0)) return da / b;
      return da / b - a * db / pow(b, Expr(2.0));
    }
    case Op::Pow: {
      const Expr& b = e.arg(1);
      const Expr db = differentiate(b, var);
      if (b.is_constant()) return b * pow(a, Expr(b.value() - 1.0)) * da;
      if (a.is_constant()) return e * log(a) * db;
      return e * (db * log(a) + b * da / a);
    }
    case Op::Sin: return cos(a) * da;
    case Op::Cos: return -(sin(a) * da);
    case Op::Exp: return e * da;
    case Op::Log: return da / a;
    case Op::Sqrt: return da / (Expr(2.0) * e);
    case Op::Tanh: return (Expr(1.0) - pow(e, Expr(2.0))) * da;
    case Op::Sabs: {
      const Expr& d = e.arg(1);
      return (a * da + d * differentiate(d, var)) / e;
    }
    case Op::Flat: {
      const int j = e.order();
      return (Expr(-static_cast<double>(j)) * flat(a, j + 1) + flat(a, j + 2)) * da;
    }
    case Op::Step: return step_derivative(a) * da;
    case Op::Nu: return (Expr(1.0) - step(a - Expr(0.5))) * da;
    case Op::Abs:
    case Op::Sgn:
      throw InvalidArgument(std::string("cannot differentiate non-smooth '") +
                            builtin_name(e.op()) + "'");
    default: break;
  }
  throw InvalidArgument("unsupported node in differentiate");
}

Expr substitute(const Expr& e, std::string_view var, const Expr& replacement) {
  if (e.op() == Op::Var) return e.name() == var ? replacement : e;
  if (e.arity() == 0) return e;
  std::vector<Expr> args;
  args.reserve(e.arity());
  for (std::size_t i = 0; i < e.arity(); ++i) args.push_back(substitute(e.arg(i), var, replacement));
  return Expr::make(e.op(), std::move(args), e.order());
}

// ---------------------------------------------------------------------------
// evaluation

double evaluate(const Expr& e, const Bindings& bindings) {
  switch (e.op()) {
    case Op::Const: return e.value();
    case Op::Var: {
      const auto it = bindings.find(e.name());
      if (it == bindings.end()) throw InvalidArgument("unbound variable '" + e.name() + "'");
      return it->second;
    }
    default: break;
  }
  const double a = evaluate(e.arg(0), bindings);
  if (is_binary(e.op())) {
    const double b = evaluate(e.arg(1), bindings);
    if (e.op() == Op::Div && b == 0.0) throw DomainFault("division by zero", to_string(e));
    if (e.op() == Op::Pow) {
      if (a == 0.0 && b < 0.0) throw DomainFault("zero raised to a negative power", to_string(e));
      if (a < 0.0 && b != std::floor(b))
        throw DomainFault("negative base with non-integer exponent", to_string(e));
    }
    return apply_binary(e.op(), a, b);
  }
  if (e.op() == Op::Log && !(a > 0.0)) throw DomainFault("log of non-positive value", to_string(e));
  if (e.op() == Op::Sqrt && a < 0.0) throw DomainFault("sqrt of negative value", to_string(e));
  return apply_unary(e.op(), a, e.order());
}

void Program::emit(const Expr& e, const std::vector<std::string>& slots, int& depth) {
  Instr ins{e.op(), e.order(), 0.0};
  if (e.op() == Op::Const) {
    ins.value = e.value();
  } else if (e.op() == Op::Var) {
    const auto it = std::find(slots.begin(), slots.end(), e.name());
    if (it == slots.end()) throw InvalidArgument("variable '" + e.name() + "' has no slot");
    ins.index = static_cast<int>(it - slots.begin());
    constant_ = false;
  } else {
    for (std::size_t i = 0; i < e.arity(); ++i) emit(e.arg(i), slots, depth);
    depth -= static_cast<int>(e.arity());
  }
  code_.push_back(ins);
  ++depth;
  depth_ = std::max(depth_, depth);
}

Program::Program(const Expr& e, const std::vector<std::string>& slots) {
  int depth = 0;
  emit(e, slots, depth);
}

double Program::operator()(std::span<const double> args) const {
  constexpr int kSmall = 64;
  std::array<double, kSmall> small{};
  std::vector<double> large;
  double* stack = small.data();
  if (depth_ > kSmall) {
    large.resize(depth_);
    stack = large.data();
  }
  int top = 0;
  for (const Instr& ins : code_) {
    switch (ins.op) {
      case Op::Const: stack[top++] = ins.value; break;
      case Op::Var: stack[top++] = args[ins.index]; break;
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
      case Op::Div:
      case Op::Pow:
      case Op::Sabs:
        --top;
        stack[top - 1] = apply_binary(ins.op, stack[top - 1], stack[top]);
        break;
      default: stack[top - 1] = apply_unary(ins.op, stack[top - 1], ins.index); break;
    }
  }
  return stack[0];
}

}  // namespace cgf
