#include "doctest.h"

#include "cgf/sheaf.hpp"

#include <cmath>

using namespace cgf;

namespace {

Vector pt(double x) {
  Vector v(1);
  v << x;
  return v;
}

const Box unit = Box::interval(0.0, 1.0);

OpenCover two_intervals() { return OpenCover{unit, {Box::interval(-0.1, 0.6), Box::interval(0.4, 1.1)}}; }

std::shared_ptr<const EmbeddedManifold> circle() {
  static const auto S1 = std::make_shared<const EmbeddedManifold>(EmbeddedManifold::sphere(1));
  return S1;
}

Patch patch(const Box& U, const std::string& theta) {
  const EpsNet n = EpsNet::parse(U, {"cos(" + theta + ")", "sin(" + theta + ")"});
  return Patch{U, certify_manifold_net(n, circle(), {U})};
}

std::vector<Patch> phase_family(const std::string& shift) {
  const OpenCover c = two_intervals();
  return {patch(c.sets[0], "2*x1 + eps"), patch(c.sets[1], "2*x1 + eps + " + shift)};
}

}  // namespace

TEST_CASE("partition of unity examples") {
  const PartitionOfUnity one = build_partition(OpenCover{unit, {Box::interval(-0.5, 1.5)}});
  for (double x : {0.0, 0.3, 1.0}) CHECK(one(pt(x))(0) == doctest::Approx(1.0).epsilon(1e-15));

  const OpenCover c = two_intervals();
  const PartitionOfUnity p = build_partition(c);
  const Matrix X = unit.grid(1024);
  for (Eigen::Index i = 0; i < X.cols(); ++i) {
    const Vector chi = p(X.col(i));
    CHECK(std::abs(chi.sum() - 1.0) <= 1e-12);
    CHECK(chi.minCoeff() >= 0.0);
  }
  // supports stay inside U with a margin
  CHECK(p(pt(0.59))(0) == 0.0);
  CHECK(p(pt(0.41))(1) == 0.0);
  // the symbolic chi agree with the evaluated ones
  CHECK(evaluate(p.chi[0], {{"x1", 0.5}}) == doctest::Approx(p(pt(0.5))(0)).epsilon(1e-14));

  CHECK_THROWS_AS(build_partition(OpenCover{unit, {Box::interval(-0.1, 0.45), Box::interval(0.55, 1.1)}}),
                  NotACover);
  CHECK_THROWS_AS(build_partition(OpenCover{unit, {Box::interval(0.0, 0.6), Box::interval(0.4, 1.1)}}), NotACover);
}

TEST_CASE("partition of unity in two dimensions") {
  const Box sq = Box::cube(2, 0, 1);
  std::vector<Box> sets;
  for (double a : {-0.1, 0.45})
    for (double b : {-0.1, 0.45}) {
      Vector lo(2), hi(2);
      lo << a, b;
      hi << a + 0.65, b + 0.65;
      sets.emplace_back(lo, hi);
    }
  const PartitionOfUnity p = build_partition(OpenCover{sq, sets});
  const Matrix X = sq.grid(64);
  for (Eigen::Index i = 0; i < X.cols(); ++i) CHECK(std::abs(p(X.col(i)).sum() - 1.0) <= 1e-12);
}

TEST_CASE("nu clauses and mu properties") {
  CHECK(nu_fn(0.25) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(nu_fn(2.0) == 1.0);
  const std::vector<Box> K{Box::interval(0.3, 0.7), Box::interval(0.15, 0.85), unit};
  const GluingSchedule s = build_schedule(K, {0.2, 0.05, 0.01});
  const Matrix X = unit.grid(201);
  const Vector eps = EpsGrid{1.0, 0.7, 30}.values();
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    const Vector x = X.col(c);
    const double eta = s.eta(x);
    CHECK(eta > 0.0);
    // eta <= eps_l on K_l minus the interior of K_{l-1}
    int shell = 0;
    while (!K[shell].contains(x)) ++shell;
    CHECK(eta <= s.thresholds()[shell] * (1 + 1e-14));
    double prev = 0.0;
    for (Eigen::Index j = eps.size() - 1; j >= 0; --j) {
      const double e = eps(j), mu = s.mu(e, x);
      CHECK(mu <= e * (1 + 1e-14));
      CHECK(mu <= eta * (1 + 1e-14));
      if (e <= eta / 2) CHECK(mu == doctest::Approx(e).epsilon(1e-15));
      CHECK(mu >= prev);
      prev = mu;
    }
  }
  // the symbolic mu agrees with the numeric one
  CHECK(evaluate(s.mu_expr(), {{"x1", 0.2}, {"eps", 0.03}}) == doctest::Approx(s.mu(0.03, pt(0.2))).epsilon(1e-13));
}

TEST_CASE("schedule argument checks") {
  CHECK_THROWS_AS(build_schedule({unit}, {0.0}), InvalidArgument);
  CHECK_THROWS_AS(build_schedule({Box::interval(0.2, 0.8), unit}, {0.1, 0.2}), InvalidArgument);
  CHECK_THROWS_AS(build_schedule({Box::interval(0.0, 0.8), unit}, {0.2, 0.1}), InvalidArgument);
}

TEST_CASE("reparametrize examples") {
  const GluingSchedule s = build_schedule({unit}, {0.1});
  const EpsNet flat_net = EpsNet::parse(unit, {"sin(x1)"});
  CHECK(structurally_equal(reparametrize(flat_net, s).expressions()[0], flat_net.expressions()[0]));

  const EpsNet u = EpsNet::parse(unit, {"sin(x1/eps) + eps^2"});
  const EpsNet r = reparametrize(u, s);
  for (double x : {0.1, 0.5, 0.9})
    for (double e : {0.05, 0.01, 1e-4}) CHECK(r(pt(x), e)(0) == doctest::Approx(u(pt(x), e)(0)).epsilon(1e-12));

  // eta = 0.1 everywhere, so mu(1, x) = 0.1 nu(10) = 0.1
  CHECK(reparametrize(EpsNet::parse(unit, {"eps"}), s)(pt(0.4), 1.0)(0) == doctest::Approx(0.1).epsilon(1e-15));

  // non-symbolic nets are reparametrised by composition
  const EpsNet f = EpsNet::from_function(unit, 1, [](const Vector&, double e) { return Vector::Constant(1, e); });
  CHECK(reparametrize(f, s)(pt(0.4), 1.0)(0) == doctest::Approx(0.1).epsilon(1e-15));
}

TEST_CASE("check_coherence examples") {
  const OpenCover c = two_intervals();
  CHECK(check_coherence(phase_family("0"), c).coherent);
  const CoherenceReport tiny = check_coherence(phase_family("exp(-1/eps)"), c);
  CHECK(tiny.coherent);
  REQUIRE(tiny.pairs.size() == 1);
  const CoherenceReport big = check_coherence(phase_family("eps"), c);
  CHECK_FALSE(big.coherent);
  CHECK(big.pairs[0].verdict.ambient.order == 1);
  CHECK(to_json(big)["coherent"] == false);
}

TEST_CASE("glue examples") {
  const OpenCover c = two_intervals();
  const PartitionOfUnity pou = build_partition(c);
  const GluingSchedule s = build_schedule({unit}, {0.5});

  SUBCASE("identical patches") {
    const auto fam = phase_family("0");
    const GlueResult g = glue(fam, c, pou, s);
    const ManifoldNet whole = patch(Box::interval(-0.1, 1.1), "2*x1 + eps").net;
    ManifoldNet w = whole;
    w.net = whole.net.restricted(unit);
    const auto v = manifold_equiv_test(g.net, w, Box::interval(0.0, 1.0));
    CHECK(v.equivalent);
    // below eta/2 the glued net reproduces the input exactly on Y
    CHECK((g.net.net(pt(0.5), 0.01) - whole.net(pt(0.5), 0.01)).norm() < 1e-14);
  }

  SUBCASE("constant family") {
    const std::vector<Patch> fam{patch(c.sets[0], "0.7"), patch(c.sets[1], "0.7")};
    const GlueResult g = glue(fam, c, pou, s);
    for (double x : {0.0, 0.5, 1.0})
      for (double e : {0.4, 1e-3})
        CHECK((g.net.net(pt(x), e) - Eigen::Vector2d(std::cos(0.7), std::sin(0.7))).norm() < 1e-15);
  }

  SUBCASE("exp(-1/eps) phase discrepancy") {
    const auto fam = phase_family("exp(-1/eps)");
    const GlueResult g = glue(fam, c, pou, s);
    CHECK(g.net.residual <= 1e-10);
    const auto checks = verify_restrictions(g.net, fam, c);
    REQUIRE(checks.size() == 2);
    for (const auto& v : checks) {
      CHECK(v.equivalent);
      CHECK(v.ambient.slope >= 3.0);
    }
    // permuting the family gives an equivalent net
    const std::vector<Patch> rev{fam[1], fam[0]};
    const OpenCover rc{unit, {c.sets[1], c.sets[0]}};
    const GlueResult h = glue(rev, rc, build_partition(rc), s);
    CHECK(manifold_equiv_test(g.net, h.net, unit).equivalent);
  }

  SUBCASE("incoherent family is rejected") {
    CHECK_THROWS_AS(glue(phase_family("eps"), c, pou, s), Error);
  }

  SUBCASE("thresholds are tightened until overlaps agree within delta") {
    const auto fam = phase_family("10*exp(-1/eps)");
    const GlueResult g = glue(fam, c, pou, s);
    CHECK(g.halvings >= 1);
    CHECK(g.schedule.thresholds()[0] < 0.5);
    CHECK(g.delta == doctest::Approx(0.225));
    for (const auto& v : verify_restrictions(g.net, fam, c)) CHECK(v.equivalent);
  }
}
