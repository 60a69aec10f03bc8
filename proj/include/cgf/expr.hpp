#pragma once

// Expression language for nets u_eps(x): parsing, printing, evaluation and
// exact symbolic differentiation. The grammar is documented in
// docs/grammar.md.

#include "cgf/types.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cgf {

enum class Op : std::uint8_t {
  Const,
  Var,
  Neg,
  Add,
  Sub,
  Mul,
  Div,
  Pow,
  Sin,
  Cos,
  Exp,
  Log,
  Sqrt,
  Tanh,
  Sabs,  // sqrt(x^2 + d^2)
  Flat,  // t^-j exp(-1/t) for t > 0, 0 otherwise; j = order()
  Step,  // C-infinity step: 0 for t <= 0, 1 for t >= 1
  Nu,    // transition: t on [0,1/2], 1 on [3/2, inf), nondecreasing, <= t
  Abs,   // data expressions only
  Sgn,   // data expressions only
};

/// Immutable expression tree. Copies share nodes; safe to read from any
/// number of threads.
class Expr {
 public:
  Expr();  // the constant 0
  explicit Expr(double c);

  static Expr constant(double c);
  static Expr variable(std::string name);
  /// Builds a node without simplification (the parser uses this).
  static Expr make(Op op, std::vector<Expr> args, int order = 0);

  Op op() const;
  double value() const;
  const std::string& name() const;
  int order() const;
  std::size_t arity() const;
  const Expr& arg(std::size_t i) const;

  bool is_constant() const { return op() == Op::Const; }
  bool is_constant(double c) const { return is_constant() && value() == c; }

 private:
  struct Node;
  explicit Expr(std::shared_ptr<const Node> node);
  std::shared_ptr<const Node> node_;
};

// Simplifying constructors: constant folding and neutral-element
// elimination only.
Expr operator-(const Expr& a);
Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr pow(const Expr& base, const Expr& exponent);
Expr sin(const Expr& a);
Expr cos(const Expr& a);
Expr exp(const Expr& a);
Expr log(const Expr& a);
Expr sqrt(const Expr& a);
Expr tanh(const Expr& a);
Expr sabs(const Expr& a, const Expr& delta);
Expr flat(const Expr& t, int order = 0);
Expr step(const Expr& t);
Expr nu(const Expr& t);

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position);
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

/// Evaluation outside the domain of a builtin; carries the failing subtree.
class DomainFault : public Error {
 public:
  DomainFault(const std::string& what, std::string subtree);
  const std::string& subtree() const { return subtree_; }

 private:
  std::string subtree_;
};

struct ParseOptions {
  /// Identifiers accepted as variables. Empty means x1..x9, y1..y9 and eps.
  std::vector<std::string> variables;
  /// Enables abs() and sgn(); such expressions describe data, not nets.
  bool allow_nonsmooth = false;
};

/// {x1, ..., xm, eps}
std::vector<std::string> net_variables(int m);
/// {y1, ..., ys}
std::vector<std::string> ambient_variables(int s);

Expr parse(std::string_view source, const ParseOptions& options = {});
std::string to_string(const Expr& e);
bool structurally_equal(const Expr& a, const Expr& b);
std::set<std::string> free_variables(const Expr& e);
/// False when the tree contains abs or sgn.
bool is_smooth(const Expr& e);

Expr differentiate(const Expr& e, std::string_view var);
Expr substitute(const Expr& e, std::string_view var, const Expr& replacement);

using Bindings = std::map<std::string, double, std::less<>>;

/// Recursive evaluation. Throws DomainFault on log/sqrt of negative values,
/// division by zero and non-integer powers of negative bases; overflow is
/// not a fault and yields +-inf.
double evaluate(const Expr& e, const Bindings& bindings);

/// Flattened postfix form of an Expr for hot loops. Domain faults yield NaN;
/// callers re-run `evaluate` on the tree to obtain the diagnostic.
class Program {
 public:
  Program() = default;
  Program(const Expr& e, const std::vector<std::string>& slots);

  double operator()(std::span<const double> args) const;
  bool constant() const { return constant_; }

 private:
  struct Instr {
    Op op;
    int index;
    double value;
  };
  void emit(const Expr& e, const std::vector<std::string>& slots, int& depth);

  std::vector<Instr> code_;
  int depth_ = 0;
  bool constant_ = true;
};

// Scalar kernels shared by the tree evaluator and the programs.
double flat_fn(double t, int order);
double step_fn(double t);
double nu_fn(double t);

}  // namespace cgf
