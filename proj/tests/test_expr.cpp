#include "doctest.h"

#include "cgf/expr.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace cgf;

namespace {

// Fourth-order central difference; independent of the symbolic path.
double central_difference(const Expr& e, Bindings at, const std::string& var, double h) {
  auto f = [&](double offset) {
    Bindings b = at;
    b[var] += offset;
    return evaluate(e, b);
  };
  return (-f(2 * h) + 8 * f(h) - 8 * f(-h) + f(-2 * h)) / (12 * h);
}

// Random smooth expressions whose sub-terms stay inside their domains on
// x1, x2 in [0.5, 1.5], eps in [0.2, 1].
std::string random_expr(std::mt19937& rng, int depth) {
  std::uniform_int_distribution<int> pick(0, depth <= 0 ? 3 : 13);
  std::uniform_real_distribution<double> coef(-2.0, 2.0);
  const int k = pick(rng);
  auto sub = [&] { return random_expr(rng, depth - 1); };
  switch (k) {
    case 0: return "x1";
    case 1: return "x2";
    case 2: return "eps";
    case 3: {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3f", coef(rng));
      return std::string("(") + buf + ")";
    }
    case 4: return "(" + sub() + "+" + sub() + ")";
    case 5: return "(" + sub() + "-" + sub() + ")";
    case 6: return "(" + sub() + "*" + sub() + ")";
    case 7: return "(" + sub() + "/(1.5+sin(" + sub() + ")))";
    case 8: return "sin(" + sub() + ")";
    case 9: return "cos(" + sub() + ")";
    case 10: return "exp(tanh(" + sub() + "))";
    case 11: return "log(1+(" + sub() + ")^2)";
    case 12: return "sabs(" + sub() + ", 0.3)";
    default: return "(" + sub() + ")^3";
  }
}

}  // namespace

TEST_CASE("parse builds the expected trees") {
  const Expr a = parse("sin(x1/eps)");
  CHECK(a.op() == Op::Sin);
  CHECK(a.arg(0).op() == Op::Div);
  CHECK(a.arg(0).arg(0).name() == "x1");
  CHECK(a.arg(0).arg(1).name() == "eps");

  const Expr b = parse("eps^(-2)*sin(x1)");
  CHECK(b.op() == Op::Mul);
  CHECK(b.arg(0).op() == Op::Pow);
  CHECK(b.arg(0).arg(1).is_constant(-2.0));
  CHECK(b.arg(1).op() == Op::Sin);

  const Expr c = parse("exp(1/eps)");
  CHECK(c.op() == Op::Exp);
  CHECK(c.arg(0).op() == Op::Div);
  CHECK(c.arg(0).arg(0).is_constant(1.0));
}

TEST_CASE("parse reports errors with positions") {
  CHECK_THROWS_AS(parse("sin(x1"), ParseError);
  try {
    parse("x1 + zz");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.position() == 5);
  }
  CHECK_THROWS_AS(parse("sin(x1, x2)"), ParseError);
  CHECK_THROWS_AS(parse("foo(x1)"), ParseError);
  CHECK_THROWS_AS(parse("abs(x1)"), ParseError);
  CHECK_NOTHROW(parse("abs(x1)", {.variables = {}, .allow_nonsmooth = true}));
  CHECK_THROWS_AS(parse("x3", {.variables = net_variables(2)}), ParseError);
}

TEST_CASE("precedence and associativity") {
  Bindings b{{"x1", 2.0}, {"x2", 3.0}, {"eps", 0.5}};
  CHECK(evaluate(parse("-x1^2"), b) == doctest::Approx(-4.0));
  CHECK(evaluate(parse("2^3^2"), b) == doctest::Approx(512.0));
  CHECK(evaluate(parse("x1-x2-1"), b) == doctest::Approx(-2.0));
  CHECK(evaluate(parse("x2/x1/2"), b) == doctest::Approx(0.75));
  CHECK(evaluate(parse("x1*-x2"), b) == doctest::Approx(-6.0));
  CHECK(evaluate(parse("eps^-2"), b) == doctest::Approx(4.0));
  CHECK(evaluate(parse("1e-3*1000"), b) == doctest::Approx(1.0));
}

TEST_CASE("evaluate examples") {
  const double pi = std::numbers::pi;
  CHECK(evaluate(parse("sin(x1/eps)"), {{"x1", pi / 2 * 1e-3}, {"eps", 1e-3}}) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(evaluate(parse("eps^(-2)"), {{"eps", 0.1}}) == doctest::Approx(100.0));
  CHECK(evaluate(parse("x1^2 - x2"), {{"x1", 2.0}, {"x2", 1.0}}) == 3.0);
}

TEST_CASE("evaluate reports domain faults with the subtree") {
  try {
    evaluate(parse("1 + log(x1 - 2)"), {{"x1", 1.0}});
    FAIL("expected DomainFault");
  } catch (const DomainFault& e) {
    CHECK(e.subtree() == "log(x1-2)");
  }
  CHECK_THROWS_AS(evaluate(parse("1/(x1-1)"), {{"x1", 1.0}}), DomainFault);
  CHECK_THROWS_AS(evaluate(parse("sqrt(x1)"), {{"x1", -1.0}}), DomainFault);
  CHECK_THROWS_AS(evaluate(parse("x1^0.5"), {{"x1", -1.0}}), DomainFault);
  CHECK_THROWS_AS(evaluate(parse("x1"), {}), InvalidArgument);
  // overflow is not a fault
  CHECK(std::isinf(evaluate(parse("exp(1/eps)"), {{"eps", 1e-4}})));
}

TEST_CASE("differentiate examples") {
  const Expr d1 = differentiate(parse("sin(x1/eps)"), "x1");
  CHECK(to_string(d1) == "cos(x1/eps)/eps");
  const Expr d2 = differentiate(parse("eps^2"), "eps");
  CHECK(to_string(d2) == "2*eps");

  const Expr sq = parse("x1*x1");
  const Expr d3 = differentiate(sq, "x1");
  const double sym = evaluate(d3, {{"x1", 3.0}});
  CHECK(sym == doctest::Approx(6.0));
  // central difference with step 1e-5
  const double h = 1e-5;
  const double fd = (evaluate(sq, {{"x1", 3.0 + h}}) - evaluate(sq, {{"x1", 3.0 - h}})) / (2 * h);
  CHECK(std::abs(sym - fd) <= 1e-8);

  CHECK(differentiate(parse("42"), "x1").is_constant(0.0));
  CHECK(differentiate(parse("sin(x2)"), "x1").is_constant(0.0));
  CHECK_THROWS_AS(differentiate(parse("abs(x1)", {.variables = {}, .allow_nonsmooth = true}), "x1"),
                  InvalidArgument);
}

TEST_CASE("differentiation is linear") {
  const Expr f = parse("sin(x1)*eps");
  const Expr g = parse("exp(x1/eps)");
  const Expr combo = Expr(2.0) * f + Expr(-3.0) * g;
  const Expr lhs = differentiate(combo, "x1");
  const Expr rhs = Expr(2.0) * differentiate(f, "x1") + Expr(-3.0) * differentiate(g, "x1");
  CHECK(structurally_equal(lhs, rhs));
}

TEST_CASE("round trip parse -> print -> parse") {
  std::mt19937 rng(7);
  for (int i = 0; i < 200; ++i) {
    const Expr e = parse(random_expr(rng, 4));
    const Expr again = parse(to_string(e));
    CHECK_MESSAGE(structurally_equal(e, again), to_string(e));
  }
  for (const char* s : {"-x1^2", "(-2)^x1", "x1-(x2-eps)", "x1/(x2*eps)", "(x1^x2)^eps",
                        "-(-x1)", "flat(x1, 3)", "2^-x1", "sabs(x1, 0.1)+nu(x2)-step(eps)"}) {
    const Expr e = parse(s);
    CHECK_MESSAGE(structurally_equal(e, parse(to_string(e))), s);
  }
}

TEST_CASE("symbolic derivative matches finite differences on random expressions") {
  std::mt19937 rng(2024);
  std::uniform_real_distribution<double> xs(0.5, 1.5), es(0.2, 1.0);
  int checked = 0;
  for (int i = 0; i < 200; ++i) {
    const Expr e = parse(random_expr(rng, 4));
    const Bindings at{{"x1", xs(rng)}, {"x2", xs(rng)}, {"eps", es(rng)}};
    for (const char* var : {"x1", "eps"}) {
      const double sym = evaluate(differentiate(e, var), at);
      const double fd = central_difference(e, at, var, 1e-3);
      CHECK_MESSAGE(std::abs(sym - fd) <= 1e-6 * (1 + std::abs(sym)), to_string(e));
    }
    ++checked;
  }
  CHECK(checked == 200);
}

TEST_CASE("derivatives stay finite on a fine grid") {
  const Expr e = parse("sin(x1/eps)*exp(-x1^2) + step(x1) + nu(2*x1) + sabs(x1, 0.01)");
  const Expr d = differentiate(e, "x1");
  const Expr dd = differentiate(d, "x1");
  for (int i = 0; i <= 2000; ++i) {
    const Bindings b{{"x1", -1.0 + i * 0.001}, {"eps", 0.05}};
    CHECK(std::isfinite(evaluate(d, b)));
    CHECK(std::isfinite(evaluate(dd, b)));
  }
}

TEST_CASE("smooth kernels") {
  CHECK(step_fn(-1.0) == 0.0);
  CHECK(step_fn(0.5) == doctest::Approx(0.5));
  CHECK(step_fn(2.0) == 1.0);
  CHECK(nu_fn(0.25) == 0.25);
  CHECK(nu_fn(2.0) == 1.0);
  CHECK(std::abs(nu_fn(1.0 - 1e-12) - nu_fn(1.0 + 1e-12)) < 1e-11);
  CHECK(std::abs(nu_fn(1.5 - 1e-12) - 1.0) < 1e-11);
  for (int i = 0; i <= 400; ++i) {
    const double t = i * 0.005;
    CHECK(nu_fn(t) <= t + 1e-15);
    CHECK(nu_fn(t) >= 0.0);
    CHECK(nu_fn(t) <= 1.0);
    if (i) CHECK(nu_fn(t) >= nu_fn(t - 0.005));
  }
  // nu' from the symbolic rule agrees with differences of the kernel
  const Expr dnu = differentiate(parse("nu(x1)"), "x1");
  for (double t : {0.6, 0.9, 1.2, 1.45}) {
    const double fd = (nu_fn(t + 1e-5) - nu_fn(t - 1e-5)) / 2e-5;
    CHECK(evaluate(dnu, {{"x1", t}}) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("programs agree with the tree evaluator") {
  std::mt19937 rng(99);
  std::uniform_real_distribution<double> xs(0.5, 1.5), es(0.2, 1.0);
  const std::vector<std::string> slots{"x1", "x2", "eps"};
  for (int i = 0; i < 100; ++i) {
    const Expr e = parse(random_expr(rng, 5));
    const Program p(e, slots);
    const double args[3] = {xs(rng), xs(rng), es(rng)};
    const double tree = evaluate(e, {{"x1", args[0]}, {"x2", args[1]}, {"eps", args[2]}});
    CHECK(p(args) == doctest::Approx(tree).epsilon(1e-14));
  }
  const Program fault(parse("log(x1)"), {"x1"});
  const double bad[1] = {-1.0};
  CHECK(std::isnan(fault(bad)));
}

TEST_CASE("substitute") {
  const Expr e = substitute(parse("sin(x1/eps)"), "eps", parse("2*x2"));
  CHECK(evaluate(e, {{"x1", 1.0}, {"x2", 0.25}}) == doctest::Approx(std::sin(2.0)));
  CHECK(free_variables(e) == std::set<std::string>{"x1", "x2"});
}
