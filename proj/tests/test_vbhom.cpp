#include "doctest.h"

#include "cgf/quadrature.hpp"
#include "cgf/vbhom.hpp"

#include <cmath>
#include <random>

using namespace cgf;

namespace {

const Box unit = Box::interval(0.0, 1.0);

Vector pt(double x) { return Vector::Constant(1, x); }

std::shared_ptr<const EmbeddedManifold> circle() {
  static const auto S1 = std::make_shared<const EmbeddedManifold>(EmbeddedManifold::sphere(1));
  return S1;
}

EpsNet phase_net(const std::string& theta) {
  return EpsNet::parse(unit, {"cos(" + theta + ")", "sin(" + theta + ")"}).with_scale_hint(parse("eps"));
}

}  // namespace

TEST_CASE("tangent examples") {
  const VBNet t = tangent(phase_net("x1/eps"));
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 1);
  for (double x : {0.1, 0.6})
    for (double eps : {0.3, 0.01}) {
      const Matrix A = t.fiber_at(pt(x), eps);
      CHECK(A(0, 0) == doctest::Approx(-std::sin(x / eps) / eps).epsilon(1e-13));
      CHECK(A(1, 0) == doctest::Approx(std::cos(x / eps) / eps).epsilon(1e-13));
    }

  const VBNet c = tangent(EpsNet::parse(unit, {"0.3", "eps"}));
  CHECK(c.fiber_at(pt(0.4), 0.2).cwiseAbs().maxCoeff() == 0.0);

  const VBNet sq = tangent(EpsNet::parse(unit, {"x1^2"}));
  CHECK(sq.fiber_at(pt(0.7), 0.1)(0, 0) == doctest::Approx(1.4).epsilon(1e-15));
  CHECK(tangent_fd_gap(sq, 0.1, 32) <= 1e-7);

  const VBNet two = tangent(EpsNet::parse(Box::cube(2, 0, 1), {"x1*x2 + eps", "sin(x1 - x2)"}));
  CHECK(two.rows() == 2);
  CHECK(two.cols() == 2);
  CHECK(tangent_fd_gap(two, 0.05) <= 1e-7);

  const auto [y, eta] = two(Eigen::Vector2d(0.2, 0.5), Eigen::Vector2d(1.0, -1.0), 0.1);
  CHECK(y(0) == doctest::Approx(0.2));
  CHECK(eta(0) == doctest::Approx(0.5 - 0.2));
  CHECK(eta(1) == doctest::Approx(2 * std::cos(-0.3)));

  const EpsNet numeric = EpsNet::from_function(unit, 1, [](const Vector& x, double) { return x; });
  CHECK_THROWS_AS(tangent(numeric), InvalidArgument);
}

TEST_CASE("chain rule") {
  const Box D = Box::cube(2, 0, 1);
  const EpsNet u = EpsNet::parse(D, {"x1 + eps*sin(x2/eps)", "x1*x2^2"});
  ParseOptions po;
  po.variables = {"y1", "y2"};
  const Expr f = parse("y1*sin(y2) + y1^2", po);
  const VBNet tf = tangent(compose({f}, u));
  const VBNet tu = tangent(u);
  std::mt19937 gen(11);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int k = 0; k < 50; ++k) {
    const Vector x = Eigen::Vector2d(U(gen), U(gen));
    const double eps = std::pow(10.0, -3.0 * U(gen));
    const Vector y = u(x, eps);
    Eigen::RowVector2d grad(evaluate(differentiate(f, "y1"), {{"y1", y(0)}, {"y2", y(1)}}),
                            evaluate(differentiate(f, "y2"), {{"y1", y(0)}, {"y2", y(1)}}));
    const Eigen::RowVectorXd want = grad * tu.fiber_at(x, eps);
    const Matrix got = tf.fiber_at(x, eps);
    for (int j = 0; j < 2; ++j) CHECK(std::abs(got(0, j) - want(j)) <= 1e-8 * std::max(1.0, std::abs(want(j))));
  }
}

TEST_CASE("vb_moderate examples") {
  const VBVerdict osc = vb_moderate(tangent(phase_net("x1/eps")), unit);
  CHECK(osc.holds);
  CHECK(osc.base.order == 0);
  CHECK(osc.fiber.order == 1);

  const VBVerdict smooth = vb_moderate(tangent(EpsNet::parse(unit, {"sin(x1)", "x1^3"})), unit);
  CHECK(smooth.holds);
  CHECK(smooth.fiber.order == 0);

  const VBVerdict bad = vb_moderate(parse_vbnet(unit, {"x1"}, {{"exp(1/eps)"}}), unit);
  CHECK_FALSE(bad.holds);
  CHECK(bad.fiber.classification == Classification::Divergent);
}

TEST_CASE("vb_equiv examples") {
  const VBNet u = parse_vbnet(unit, {"cos(x1)", "sin(x1)"}, {{"-sin(x1)", "1"}, {"cos(x1)", "x1"}}, circle());
  CHECK(vb_equiv(u, u, unit).holds);

  const VBNet tiny = parse_vbnet(unit, {"cos(x1)", "sin(x1)"},
                                 {{"-sin(x1) + exp(-1/eps)*x1", "1"}, {"cos(x1)", "x1"}}, circle());
  const VBVerdict t = vb_equiv(u, tiny, unit);
  CHECK(t.holds);
  REQUIRE(t.manifold.has_value());
  CHECK(t.manifold->equivalent);

  const VBNet shifted = parse_vbnet(unit, {"cos(x1)", "sin(x1)"},
                                    {{"-sin(x1) + eps", "1"}, {"cos(x1)", "x1 + eps"}}, circle());
  const VBVerdict s = vb_equiv(u, shifted, unit);
  CHECK_FALSE(s.holds);
  CHECK(s.fiber.order == 1);
  CHECK(to_json(s)["holds"] == false);

  CHECK_THROWS_AS(vb_equiv(u, tangent(phase_net("x1")), unit), InvalidArgument);
}

TEST_CASE("transformation law") {
  const EpsNet u = EpsNet::parse(unit, {"x1 + eps*sin(x1/eps)", "x1^2"});
  const double a = 0.6;
  Matrix psi(2, 2);
  psi << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
  const Vector c = Eigen::Vector2d(0.5, -1.0);

  // changing target coordinates before or after taking the tangent agrees
  std::vector<Expr> rotated;
  for (int i = 0; i < 2; ++i)
    rotated.push_back(Expr(c(i)) + Expr(psi(i, 0)) * u.expressions()[0] + Expr(psi(i, 1)) * u.expressions()[1]);
  const VBNet direct = tangent(EpsNet::from_exprs(unit, rotated));
  const VBNet conj = transform(tangent(u), Matrix::Identity(1, 1), psi, c);
  CHECK(vb_equiv(conj, direct, unit).holds);

  // source fibre chart xi' = 2 xi, i.e. x' = 2x
  const Matrix phi = Matrix::Constant(1, 1, 2.0);
  const VBNet scaled = transform(tangent(u), phi, Matrix::Identity(2, 2), Vector::Zero(2));
  const VBNet reparam = tangent(EpsNet::parse(Box::interval(0, 2), {"x1/2 + eps*sin(x1/(2*eps))", "(x1/2)^2"}));
  for (double x : {0.1, 0.45, 0.9})
    CHECK((scaled.fiber_at(pt(x), 0.01) - reparam.fiber_at(pt(2 * x), 0.01)).norm() < 1e-12);

  CHECK_THROWS_AS(transform(tangent(u), Matrix::Zero(1, 1), psi, c), InvalidArgument);
}

TEST_CASE("embedding continuous vb-homomorphisms") {
  const Mollifier rho = build_mollifier(1, 2);
  const Box dom = Box::interval(-1, 1);

  const VBNet id = embed_vb_continuous(SampledMap::parse(dom, {"x1"}, Regularity::Smooth),
                                       SampledMap::parse(dom, {"1"}, Regularity::Smooth), 1, 1, rho);
  CHECK(id.base().symbolic());
  for (double x : {-0.9, 0.0, 0.4})
    for (double eps : {0.5, 1e-3}) {
      CHECK(id.base()(pt(x), eps)(0) == x);
      CHECK(id.fiber_at(pt(x), eps)(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
    }

  // Lipschitz fibre entry: uniform error of order eps on a compact around the kink
  const VBNet lip = embed_vb_continuous(SampledMap::parse(dom, {"x1"}, Regularity::Smooth),
                                        SampledMap::parse(dom, {"abs(x1)"}, Regularity::Continuous), 1, 1, rho);
  const Box K = Box::interval(-0.5, 0.5);
  const EpsGrid grid;
  Vector err(grid.size());
  const Matrix X = K.grid(201);
  for (int j = 0; j < grid.size(); ++j) {
    double w = 0.0;
    for (Eigen::Index c = 0; c < X.cols(); ++c)
      w = std::max(w, std::abs(lip.fiber_at(X.col(c), grid[j])(0, 0) - std::abs(X(0, c))));
    err(j) = w;
  }
  const SeriesFit fit = fit_series(grid.values(), err, AsymptoticOptions{});
  CHECK(fit.slope == doctest::Approx(1.0).epsilon(0.1));

  // step fibre over a smooth base converges weakly to sgn
  const VBNet step = embed_vb_continuous(SampledMap::parse(dom, {"x1"}, Regularity::Smooth),
                                         SampledMap::parse(dom, {"sgn(x1)"}, Regularity::Bounded), 1, 1, rho);
  const TestFunction phi = TestFunction::interval(0.1, 0.4);
  auto phi_at = [&](double x) { return phi(pt(x)); };
  const double want = integrate<double>(phi_at, 0.0, 0.5, 8, 32) - integrate<double>(phi_at, -0.3, 0.0, 8, 32);
  PairingOptions po;
  po.grid = EpsGrid{0.05, 0.5, 8};
  po.refine_tol = 1e-7;  // convolving jump data is only accurate to about 1e-9
  const PairingSeries s = pairing_series(step.fiber(), {Expr::variable("y1")}, phi, po).front();
  CHECK(s.converged());
  CHECK(s.limit == doctest::Approx(want).epsilon(1e-6));

  // rough fibre over a merely continuous base is refused
  CHECK_THROWS_AS(embed_vb_continuous(SampledMap::parse(dom, {"abs(x1)"}, Regularity::Continuous),
                                      SampledMap::parse(dom, {"sgn(x1)"}, Regularity::Bounded), 1, 1, rho),
                  InvalidArgument);
  CHECK_THROWS_AS(embed_vb_continuous(SampledMap::parse(dom, {"x1"}, Regularity::Smooth),
                                      SampledMap::parse(dom, {"1", "2"}, Regularity::Smooth), 1, 1, rho),
                  InvalidArgument);

  // continuous base into the circle goes through the manifold embedding
  const VBNet circ = embed_vb_continuous(
      SampledMap::parse(Box::interval(-1, 2), {"cos(1 + abs(x1 - 0.5))", "sin(1 + abs(x1 - 0.5))"},
                        Regularity::Continuous),
      SampledMap::parse(Box::interval(-1, 2), {"1", "0"}, Regularity::Smooth), 2, 1, rho, circle());
  CHECK(std::abs(circ.base()(pt(0.5), 1e-3).norm() - 1.0) < 1e-12);
}

TEST_CASE("model vb-equivalence") {
  const auto phis = bump_row(unit, 3, 0.15);
  const TestFamily F = TestFamily::trig(2);
  PairingOptions po;
  po.grid = EpsGrid{0.1, 0.5, 10};

  const VBNet tv = tangent(phase_net("x1"), circle());
  CHECK(model_vb_equiv(tv, tv, F, phis, po).equivalent);

  // phases differing by sqrt(eps) sin(x/eps): model-associated, derivatives unbounded
  const VBNet tu = tangent(phase_net("x1 + sqrt(eps)*sin(x1/eps)"), circle());
  CHECK(vb_moderate(tu, unit).fiber.slope < -0.4);
  const ModelVBVerdict m = model_vb_equiv(tu, tv, F, phis, po);
  CHECK(m.equivalent);
  CHECK_FALSE(vb_equiv(tu, tv, unit).holds);

  // same base, fibres apart by a constant
  const VBNet off = VBNet(tv.base(), tv.fiber() - EpsNet::parse(unit, {"0.3", "0.3"}), 2, 1, circle());
  const ModelVBVerdict d = model_vb_equiv(tv, off, F, phis, po);
  CHECK_FALSE(d.equivalent);
  CHECK(d.base.associated);
  CHECK_FALSE(d.fiber.associated);
  CHECK(to_json(d)["fiber"].contains("witness"));

  // vb-equivalence implies model vb-equivalence
  const VBNet close = VBNet(tv.base(), tv.fiber() - EpsNet::parse(unit, {"exp(-1/eps)", "0"}), 2, 1, circle());
  CHECK(vb_equiv(tv, close, unit).holds);
  CHECK(model_vb_equiv(tv, close, F, phis, po).equivalent);
}

TEST_CASE("gluing vb-nets") {
  const OpenCover cover{unit, {Box::interval(-0.1, 0.6), Box::interval(0.4, 1.1)}};
  const PartitionOfUnity pou = build_partition(cover);
  const GluingSchedule s = build_schedule({unit}, {0.5});
  const EpsNet wide = EpsNet::parse(Box::interval(-0.1, 1.1), {"cos(2*x1 + eps)", "sin(2*x1 + eps)"});
  const VBNet t = tangent(wide, circle());
  std::vector<VBPatch> fam;
  for (const Box& U : cover.sets) fam.push_back({U, VBNet(wide.restricted(U), t.fiber().restricted(U), 2, 1, circle())});
  const VBGlueResult g = glue_vb(fam, cover, pou, s);
  for (double x : {0.0, 0.5, 0.93}) {
    CHECK((g.net.fiber_at(pt(x), 0.01) - t.fiber_at(pt(x), 0.01)).norm() < 1e-13);
    CHECK((g.net.base()(pt(x), 0.01) - wide(pt(x), 0.01)).norm() < 1e-13);
  }
  CHECK(vb_equiv(g.net, VBNet(wide.restricted(unit), t.fiber().restricted(unit), 2, 1, circle()), unit).holds);
}
