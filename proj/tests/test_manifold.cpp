#include "doctest.h"

#include "cgf/manifold.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace cgf;

namespace {

constexpr double pi = std::numbers::pi;

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

struct Nearest {
  double distance;
  Vector point;
};

// Brute-force oracle: coarse grid over the angle box, then repeated local
// zooms around the best cell.
Nearest grid_search(const std::function<Vector(const Vector&)>& param, const Vector& lo, const Vector& hi,
                    const Vector& p) {
  const Eigen::Index d = lo.size();
  Vector center = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
  const int coarse = d == 1 ? 4001 : 301;
  Nearest best{std::numeric_limits<double>::infinity(), Vector()};
  Vector best_t = center;
  for (int level = 0; level < 12; ++level) {
    const int n = level == 0 ? coarse : 21;
    const Box box(center - half, center + half);
    const Matrix T = box.grid(n);
    for (Eigen::Index c = 0; c < T.cols(); ++c) {
      const Vector y = param(T.col(c));
      const double dist = (y - p).norm();
      if (dist < best.distance) {
        best = {dist, y};
        best_t = T.col(c);
      }
    }
    center = best_t;
    half = 2.0 * half / (n - 1);
  }
  return best;
}

Nearest oracle(const EmbeddedManifold& M, const Vector& p) {
  const int d = M.parameter_dim();
  Vector lo = Vector::Zero(d), hi = Vector::Constant(d, 2 * pi);
  if (M.kind() == ManifoldKind::Sphere && d == 2) hi(0) = pi;
  // widen a little so zooms near the ends stay inside the box
  lo.array() -= 0.1;
  hi.array() += 0.1;
  return grid_search([&](const Vector& t) { return M.parametrize(t); }, lo, hi, p);
}

// Random point at distance < tube radius from a random point of M.
Vector tube_point(const EmbeddedManifold& M, std::mt19937& rng, double max_offset) {
  std::uniform_real_distribution<double> ang(0.0, 2 * pi), off(-max_offset, max_offset);
  Vector t(M.parameter_dim());
  for (Eigen::Index i = 0; i < t.size(); ++i) t(i) = ang(rng);
  Vector p = M.parametrize(t);
  for (Eigen::Index i = 0; i < p.size(); ++i) p(i) += off(rng) / std::sqrt(static_cast<double>(p.size()));
  return p;
}

EpsNet net(std::vector<std::string> comps, const Box& b = Box::interval(0, 1)) { return EpsNet::parse(b, comps); }

}  // namespace

TEST_CASE("retract examples") {
  const auto S1 = EmbeddedManifold::sphere(1);
  CHECK((S1.retract(vec({0, 2})) - vec({0, 1})).norm() < 1e-15);
  CHECK_THROWS_AS(S1.retract(vec({0, 0})), OutsideTube);
  CHECK_THROWS_AS(S1.retract(vec({0.05, 0})), OutsideTube);

  const auto T2 = EmbeddedManifold::torus(2);
  const Vector p = vec({0.5, 0, 0, 2});
  const Vector r = T2.retract(p);
  CHECK((r - vec({1, 0, 0, 1})).norm() < 1e-15);
  const Nearest o = oracle(T2, p);
  CHECK((r - o.point).norm() < 1e-6);
  CHECK(std::abs((r - p).norm() - o.distance) < 1e-6);
}

TEST_CASE("extend_retraction examples") {
  const auto S1 = EmbeddedManifold::sphere(1);
  CHECK(S1.inner_tau() == doctest::Approx(0.45));
  CHECK((S1.extend_retraction(vec({0, 1.4})) - vec({0, 1})).norm() < 1e-15);
  const Vector on = vec({std::cos(0.3), std::sin(0.3)});
  CHECK((S1.extend_retraction(on) - on).norm() < 1e-15);
  const Vector q = vec({0.3, -1.2});
  CHECK((S1.extend_retraction(q) - S1.retract(q)).norm() < 1e-15);
  // identity beyond the tube, including the centre
  CHECK((S1.extend_retraction(vec({0, 0})) - vec({0, 0})).norm() == 0.0);
  CHECK((S1.extend_retraction(vec({3, 0})) - vec({3, 0})).norm() == 0.0);
}

TEST_CASE("extend_retraction is continuous along rays") {
  const auto S1 = EmbeddedManifold::sphere(1);
  const Vector dir = vec({std::cos(1.1), std::sin(1.1)});
  Vector prev = S1.extend_retraction(Vector::Zero(2));
  for (int i = 1; i <= 4000; ++i) {
    const double r = 2.5 * i / 4000.0;
    const Vector cur = S1.extend_retraction(r * dir);
    CHECK((cur - prev).norm() < 0.01);
    prev = cur;
  }
}

TEST_CASE("retraction idempotence and nearest-point property") {
  std::mt19937 rng(7);
  const std::vector<EmbeddedManifold> corpus{EmbeddedManifold::sphere(1), EmbeddedManifold::sphere(2),
                                             EmbeddedManifold::torus(2)};
  for (const auto& M : corpus) {
    CAPTURE(M.to_json().dump());
    for (int trial = 0; trial < 40; ++trial) {
      const Vector p = tube_point(M, rng, 0.8);
      const Vector r = M.retract(p);
      CHECK(M.constraint(r).norm() <= 1e-10);
      CHECK((M.retract(r) - r).norm() <= 1e-10);
      const Nearest o = oracle(M, p);
      CHECK((r - p).norm() <= o.distance + 1e-6);
      CHECK(std::abs(M.distance(p) - o.distance) <= 1e-6);
    }
  }
}

TEST_CASE("implicit manifolds by Newton projection") {
  // the unit sphere given implicitly agrees with the closed form (inside the
  // conservative guard 2|g|/sigma_min <= tau)
  ParseOptions po;
  po.variables = ambient_variables(3);
  const auto S2 = EmbeddedManifold::sphere(2);
  const auto S2i = EmbeddedManifold::implicit(3, {parse("y1^2 + y2^2 + y3^2 - 1", po)}, 0.9);
  std::mt19937 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const Vector p = tube_point(S2, rng, 0.4);
    CHECK((S2i.retract(p) - S2.retract(p)).norm() < 1e-10);
    CHECK(S2i.distance(p) == doctest::Approx(S2.distance(p)).epsilon(1e-9));
  }

  // ellipse with semi-axes 2 and 1; curvature radius >= 1/2 so tau = 0.4 is safe
  po.variables = ambient_variables(2);
  const auto E = EmbeddedManifold::implicit(2, {parse("y1^2/4 + y2^2 - 1", po)}, 0.4);
  auto param = [](const Vector& t) { return vec({2 * std::cos(t(0)), std::sin(t(0))}); };
  std::uniform_real_distribution<double> ang(0, 2 * pi), off(-0.15, 0.15);
  for (int trial = 0; trial < 30; ++trial) {
    const double t = ang(rng);
    const Vector base = param(vec({t}));
    const Vector normal = vec({std::cos(t), 2 * std::sin(t)}).normalized();
    const Vector p = base + off(rng) * normal;
    const Vector r = E.retract(p);
    CHECK(std::abs(E.constraint(r)(0)) <= 1e-10);
    CHECK((E.retract(r) - r).norm() <= 1e-10);
    const Nearest o = grid_search(param, vec({-0.1}), vec({2 * pi + 0.1}), p);
    CHECK((r - p).norm() <= o.distance + 1e-6);
    CHECK((r - o.point).norm() <= 1e-5);
  }
  CHECK_THROWS_AS(E.retract(vec({0, 0})), OutsideTube);
  CHECK(E.extend_retraction(vec({0.5, 0.1})) == vec({0.5, 0.1}));
}

TEST_CASE("manifold JSON round trip") {
  ParseOptions po;
  po.variables = ambient_variables(2);
  for (const auto& M : {EmbeddedManifold::sphere(2), EmbeddedManifold::torus(3, 0.5),
                        EmbeddedManifold::implicit(2, {parse("y1^2/4 + y2^2 - 1", po)}, 0.2)}) {
    const auto back = EmbeddedManifold::from_json(nlohmann::json::parse(M.to_json().dump()));
    CHECK(back.kind() == M.kind());
    CHECK(back.ambient_dim() == M.ambient_dim());
    CHECK(back.tau() == M.tau());
    CHECK(back.to_json() == M.to_json());
  }
  CHECK_THROWS_AS(EmbeddedManifold::from_json({{"kind", "klein"}}), InvalidArgument);
}

TEST_CASE("certify_manifold_net examples") {
  const auto S1 = std::make_shared<const EmbeddedManifold>(EmbeddedManifold::sphere(1));
  const Box K = Box::interval(0.2, 0.8);
  const ManifoldNet a = certify_manifold_net(net({"cos(x1/eps)", "sin(x1/eps)"}), S1, {K});
  CHECK(a.residual <= 1e-8);
  CHECK(a.c_bounded);
  CHECK(a.bounds.size() == 1);
  CHECK(a.bounds[0].image.hi().maxCoeff() <= 1.0 + 1e-12);

  CHECK_THROWS_AS(certify_manifold_net(net({"x1", "eps"}), S1, {K}), OffManifold);

  const ManifoldNet c = certify_manifold_net(net({"cos(1/eps)", "sin(1/eps)"}), S1, {K});
  CHECK(c.c_bounded);

  // the x-axis as an implicit manifold; images escaping to infinity
  ParseOptions po;
  po.variables = ambient_variables(2);
  const auto line = std::make_shared<const EmbeddedManifold>(EmbeddedManifold::implicit(2, {parse("y2", po)}, 1.0));
  CHECK_THROWS_AS(certify_manifold_net(net({"x1/eps", "0"}), line, {K}), CBoundViolation);
  CHECK(certify_manifold_net(net({"sin(x1/eps)", "0"}), line, {K}).c_bounded);
}

TEST_CASE("manifold_equiv_test examples") {
  const auto S1 = std::make_shared<const EmbeddedManifold>(EmbeddedManifold::sphere(1));
  const Box K = Box::interval(0.1, 0.9);
  auto certify = [&](std::vector<std::string> c) { return certify_manifold_net(net(std::move(c)), S1, {K}); };
  const ManifoldNet u = certify({"cos(x1/eps)", "sin(x1/eps)"});
  const ManifoldNet same = certify({"cos(x1/eps)", "sin(x1/eps)"});
  const ManifoldNet tiny = certify({"cos(x1/eps + exp(-1/eps))", "sin(x1/eps + exp(-1/eps))"});
  const ManifoldNet order1 = certify({"cos(x1/eps + eps)", "sin(x1/eps + eps)"});

  const auto a = manifold_equiv_test(u, same, K);
  CHECK(a.equivalent);
  CHECK(a.ambient.exact_zero);

  const auto b = manifold_equiv_test(u, tiny, K);
  CHECK(b.equivalent);
  CHECK(b.riemannian_agrees.value());

  const auto c = manifold_equiv_test(u, order1, K);
  CHECK_FALSE(c.equivalent);
  CHECK(c.distance_to_zero);
  CHECK(c.ambient.order == 1);
  CHECK(c.riemannian_agrees.value());
}
