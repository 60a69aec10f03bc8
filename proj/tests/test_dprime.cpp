#include "doctest.h"

#include "cgf/dprime.hpp"
#include "cgf/mollify.hpp"
#include "cgf/quadrature.hpp"

#include <cmath>
#include <numbers>

using namespace cgf;

namespace {

constexpr double pi = std::numbers::pi;

const Box unit = Box::interval(0.0, 1.0);

EpsNet oscillating(const std::string& src) { return EpsNet::parse(unit, {src}).with_scale_hint(parse("eps")); }

// (1/2pi) int_0^{2pi} sin^k; the trapezoid rule is exact for trig polynomials of low degree
double sin_moment(int k) {
  const int n = 64;
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::pow(std::sin(2 * pi * i / n), k);
  return s / n;
}

Expr f_of(const std::string& src) {
  ParseOptions po;
  po.variables = {"y1", "y2"};
  return parse(src, po);
}

}  // namespace

TEST_CASE("test functions") {
  const TestFunction phi = TestFunction::interval(0.5, 0.2);
  CHECK(phi.integral() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(integrate<double>([&](double x) { return phi(Vector::Constant(1, x)); }, 0.3, 0.7, 8, 32) ==
        doctest::Approx(1.0).epsilon(1e-10));
  CHECK(phi(Vector::Constant(1, 0.71)) == 0.0);
  CHECK(evaluate(phi.expr(), {{"x1", 0.43}}) == doctest::Approx(phi(Vector::Constant(1, 0.43))).epsilon(1e-14));

  const TestFunction raw(Eigen::Vector2d(0.5, 0.5), Eigen::Vector2d(0.25, 0.1), false);
  const double I1 = integrate<double>([](double t) { return std::abs(t) < 1 ? std::exp(-1 / (1 - t * t)) : 0.0; },
                                      -1.0, 1.0, 16, 32);
  CHECK(raw.integral() == doctest::Approx(I1 * I1 * 0.025).epsilon(1e-10));

  CHECK_THROWS_AS(TestFunction::interval(0.5, 0.0), InvalidArgument);
  const auto row = bump_row(unit, 3, 0.1);
  REQUIRE(row.size() == 3);
  for (const auto& p : row) CHECK(unit.contains(p.support(), 1e-15));
}

TEST_CASE("test families") {
  const TestFamily T = TestFamily::trig(3);
  REQUIRE(T.functions.size() == 6);
  for (double th : {0.3, 1.7, 4.0}) {
    const Bindings b{{"y1", std::cos(th)}, {"y2", std::sin(th)}};
    for (int k = 1; k <= 3; ++k) {
      CHECK(evaluate(T.functions[2 * (k - 1)], b) == doctest::Approx(std::cos(k * th)).epsilon(1e-13));
      CHECK(evaluate(T.functions[2 * (k - 1) + 1], b) == doctest::Approx(std::sin(k * th)).epsilon(1e-13));
    }
  }
  CHECK(TestFamily::monomials(6).functions.size() == 6);
  CHECK(TestFamily::coordinates(3).labels[2] == "y3");
  CHECK_THROWS_AS(tolerance_profile("lax"), InvalidArgument);
  CHECK(tolerance_profile("strict").abs_tol < tolerance_profile("default").abs_tol);
}

TEST_CASE("pair examples") {
  const TestFunction phi = TestFunction::interval(0.5, 0.3);
  const EpsNet c = EpsNet::parse(unit, {"0.7"});
  CHECK(pair(c, f_of("y1^2"), phi, 0.1).value == doctest::Approx(0.49).epsilon(1e-12));

  const EpsNet s = oscillating("sin(x1/eps)");
  // at eps = 1e-2 the bump's Fourier tail is still ~1e-4, so start lower
  for (double eps : {1e-3, 1e-4}) {
    const Pairing p1 = pair(s, f_of("y1"), phi, eps);
    CHECK_FALSE(p1.under_resolved);
    CHECK(std::abs(p1.value) < 1e-6);
    CHECK(pair(s, f_of("y1^2"), phi, eps).value == doctest::Approx(0.5).epsilon(1e-6));
  }

  // linearity in f
  const Pairing a = pair(s, f_of("y1^3"), phi, 0.01), b = pair(s, f_of("cos(y1)"), phi, 0.01);
  CHECK(pair(s, f_of("2*y1^3 - 3*cos(y1)"), phi, 0.01).value ==
        doctest::Approx(2 * a.value - 3 * b.value).epsilon(1e-10));

  CHECK_THROWS_AS(pair(s, f_of("y1"), TestFunction::interval(0.9, 0.2), 0.1), InvalidArgument);
}

TEST_CASE("series analysis") {
  const Vector eps = EpsGrid{}.values();
  const std::vector<bool> ok(15, false);
  // algebraic approach to 2: Richardson recovers the limit
  const PairingSeries r = analyze_series(eps, (2.0 + 3.0 * eps.array()).matrix(), ok);
  CHECK(r.status == PairingStatus::Converged);
  CHECK(r.limit == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(r.rate == doctest::Approx(1.0).epsilon(1e-6));

  // a pre-asymptotic start in the tail must not bias the rate
  Vector late = (2.0 + 3.0 * eps.array()).matrix();
  late(9) += 0.04;
  late(10) -= 0.01;
  const PairingSeries lr = analyze_series(eps, late, ok);
  CHECK(lr.status == PairingStatus::Converged);
  CHECK(lr.rate == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(lr.limit == doctest::Approx(2.0).epsilon(1e-10));

  Vector alt(15);
  for (int j = 0; j < 15; ++j) alt(j) = j % 2 ? 1.0 : -1.0;
  CHECK(analyze_series(eps, alt, ok).status == PairingStatus::Divergent);

  Vector grow = eps.cwiseInverse();
  CHECK(analyze_series(eps, grow, ok).status == PairingStatus::Divergent);

  // decaying steps without a clean power law
  Vector rough(15);
  for (int j = 0; j < 15; ++j) rough(j) = 1.0 + (j % 3 ? 1.0 : 1000.0) * eps(j);
  CHECK(analyze_series(eps, rough, ok).status == PairingStatus::ConvergedUnordered);

  std::vector<bool> flagged(15, false);
  flagged[14] = true;
  CHECK(analyze_series(eps, Vector::Zero(15), flagged).status == PairingStatus::UnderResolved);
}

TEST_CASE("membership in A") {
  const auto phis = bump_row(unit, 2, 0.2);
  const MembershipReport r = membership_test_A(oscillating("sin(x1/eps)"), TestFamily::monomials(6), phis);
  CHECK(r.member);
  CHECK(r.bound.bounded);
  REQUIRE(r.entries.size() == 12);
  for (std::size_t i = 0; i < r.entries.size(); ++i) {
    const int k = static_cast<int>(i % 6) + 1;
    CHECK(r.entries[i].series.converged());
    CHECK(r.entries[i].series.limit == doctest::Approx(sin_moment(k)).epsilon(1e-6).scale(1.0));
  }
  CHECK(sin_moment(4) == doctest::Approx(0.375));

  const MembershipReport c = membership_test_A(EpsNet::parse(unit, {"-0.4"}), TestFamily::monomials(3), phis);
  CHECK(c.member);
  CHECK(c.entries[2].series.limit == doctest::Approx(-0.064).epsilon(1e-12));

  const MembershipReport big = membership_test_A(EpsNet::parse(unit, {"sin(x1)/eps"}), TestFamily::monomials(1), phis);
  CHECK_FALSE(big.bound.bounded);
  CHECK_FALSE(big.member);

  PairingOptions coarse;
  coarse.max_nodes_per_axis = 4096;
  const MembershipReport u = membership_test_A(EpsNet::parse(unit, {"sin(x1/eps^2)*sin(x1/eps)"}),
                                               TestFamily::monomials(2), {phis[0]}, coarse);
  CHECK_FALSE(u.member);
  CHECK(u.inconclusive);
  CHECK(to_json(u)["entries"][0]["series"]["status"] == "under_resolved");
}

TEST_CASE("model association") {
  const auto phis = bump_row(unit, 2, 0.2);
  const EpsNet s = oscillating("sin(x1/eps)");
  const EpsNet zero = EpsNet::parse(unit, {"0"});
  CHECK(model_assoc_test(s, s, TestFamily::monomials(4), phis).associated);

  // plain association holds, model association does not
  CHECK(model_assoc_test(s, zero, TestFamily::coordinates(1), phis).associated);
  const AssocVerdict v = model_assoc_test(s, zero, TestFamily::monomials(2), phis);
  CHECK_FALSE(v.associated);
  REQUIRE(v.witness.has_value());
  CHECK(v.entries[*v.witness].f == "y^2");
  CHECK(v.entries[*v.witness].series.limit == doctest::Approx(0.5).epsilon(1e-6));

  // relation properties on a small corpus
  const std::vector<EpsNet> nets{s, oscillating("sin(x1/eps) + eps*x1"), oscillating("sin(x1/eps + eps)"), zero};
  const TestFamily F = TestFamily::monomials(3);
  bool rel[4][4];
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) rel[i][j] = model_assoc_test(nets[i], nets[j], F, phis).associated;
  for (int i = 0; i < 4; ++i) {
    CHECK(rel[i][i]);
    for (int j = 0; j < 4; ++j) {
      CHECK(rel[i][j] == rel[j][i]);
      for (int k = 0; k < 4; ++k)
        if (rel[i][j] && rel[j][k]) CHECK(rel[i][k]);
    }
  }
  CHECK(rel[0][1]);
  CHECK(rel[1][2]);
  CHECK_FALSE(rel[0][3]);
}

TEST_CASE("embedded continuous map and a finer mollification are associated") {
  const SampledMap u = SampledMap::parse(Box::interval(-0.5, 1.5), {"abs(x1 - 0.5)"}, Regularity::Continuous);
  const EpsNet smoothed = embed_scalar(u, build_mollifier(1, 2)).restricted(unit);
  const EpsNet finer = EpsNet::from_function(unit, 1, [smoothed](const Vector& x, double e) {
    return smoothed(x, e * e);
  });
  const auto phis = std::vector<TestFunction>{TestFunction::interval(0.25, 0.2), TestFunction::interval(0.75, 0.2)};
  const AssocVerdict v = model_assoc_test(smoothed, finer, TestFamily::monomials(2), phis);
  CHECK(v.associated);
}

TEST_CASE("young measure estimates") {
  const EpsNet s = oscillating("sin(x1/eps)");
  const YoungMeasureEstimate y = young_estimate(s, unit, std::nullopt, 1e-3, 64);
  CHECK_FALSE(y.under_resolved);
  CHECK(y.density.sum() * (2.0 / 64) == doctest::Approx(1.0).epsilon(1e-3));
  // arcsine oracle: P(sin theta in [a, b]) = (asin b - asin a) / pi
  double l1 = 0.0;
  for (int k = 0; k < 64; ++k) {
    const double a = y.edges(k), b = y.edges(k + 1);
    l1 += std::abs(y.mass(k) / y.phi_integral - (std::asin(b) - std::asin(a)) / pi);
  }
  CHECK(l1 <= 0.05);

  // refinement stability
  const YoungMeasureEstimate y2 = young_estimate(s, unit, std::nullopt, 5e-4, 64);
  CHECK((y2.density - y.density).cwiseAbs().sum() * (2.0 / 64) <= 0.05);

  // weighted by a bump: total mass equals the integral of phi
  const TestFunction phi = TestFunction::interval(0.5, 0.3);
  const YoungMeasureEstimate yw = young_estimate(s, unit, phi.expr(), 1e-3, 64);
  CHECK(yw.mass.sum() == doctest::Approx(phi.integral()).epsilon(1e-3));

  // the Young measure reproduces the weak limits
  for (int k : {2, 4, 6}) {
    const double limit = pairing_series(s, {f_of("y1^" + std::to_string(k))}, phi).front().limit;
    CHECK(yw.expectation([k](double t) { return std::pow(t, k); }) * phi.integral() ==
          doctest::Approx(limit).epsilon(0.02));
  }

  const YoungMeasureEstimate c = young_estimate(EpsNet::parse(unit, {"0.3"}), unit, std::nullopt, 1e-3, 10);
  CHECK(c.mass(6) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(c.mass.sum() == doctest::Approx(1.0).epsilon(1e-12));

  YoungOptions o;
  o.lo = 0.0;
  const YoungMeasureEstimate id = young_estimate(EpsNet::parse(unit, {"x1"}), unit, std::nullopt, 0.1, 16, o);
  CHECK_FALSE(id.under_resolved);
  for (Eigen::Index k = 0; k < 16; ++k) CHECK(id.density(k) == doctest::Approx(1.0).epsilon(1e-6));

  // angle coordinate on the circle: exp(i x / eps) is uniform on [0, 2 pi)
  YoungOptions ao;
  ao.coordinate = YoungCoordinate::Angle;
  const EpsNet circ = EpsNet::parse(unit, {"cos(x1/eps)", "sin(x1/eps)"}).with_scale_hint(parse("eps"));
  const YoungMeasureEstimate ya = young_estimate(circ, unit, std::nullopt, 1e-3, 8, ao);
  for (Eigen::Index k = 0; k < 8; ++k) CHECK(ya.density(k) * 2 * pi == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("limit functional") {
  const EpsNet s = oscillating("sin(x1/eps)");
  const Box K = Box::interval(0.3, 0.7);
  const SampledFunctional uf = limit_functional(s, f_of("y1^2"), K, 3, 0.2);
  for (Eigen::Index i = 0; i < uf.values.size(); ++i) CHECK(uf.values(i) == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(uf.within_bound);
  CHECK(uf.sup_f_on_image == doctest::Approx(1.0).epsilon(1e-3));

  const SampledFunctional c = limit_functional(EpsNet::parse(unit, {"0.6"}), f_of("y1^3"), K, 2, 0.2);
  for (Eigen::Index i = 0; i < c.values.size(); ++i) CHECK(c.values(i) == doctest::Approx(0.216).epsilon(1e-12));

  // f = id on an embedded continuous map recovers the map as the bumps shrink
  const SampledMap u = SampledMap::parse(Box::interval(-0.5, 1.5), {"abs(x1 - 0.5)"}, Regularity::Continuous);
  const EpsNet smoothed = embed_scalar(u, build_mollifier(1, 2)).restricted(unit);
  PairingOptions short_grid;
  short_grid.grid = EpsGrid{0.05, 0.5, 8};
  double prev = 1.0;
  for (double w : {0.2, 0.1, 0.05}) {
    const SampledFunctional id = limit_functional(smoothed, f_of("y1"), Box::interval(0.3, 0.7), 3, w, short_grid);
    double err = 0.0;
    for (std::size_t i = 0; i < id.centers.size(); ++i)
      err = std::max(err, std::abs(id.values(static_cast<Eigen::Index>(i)) - std::abs(id.centers[i](0) - 0.5)));
    CHECK(err < prev);
    prev = err;
  }
  CHECK(prev < 0.02);
}
