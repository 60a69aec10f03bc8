#include "cgf/manifold.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace cgf {

namespace {

Expr sum_of_squares(int first, int count) {
  Expr s(0.0);
  for (int i = first; i < first + count; ++i) s = s + pow(Expr::variable("y" + std::to_string(i)), Expr(2.0));
  return s;
}

double eval(const Program& p, const Vector& y) { return p(std::span<const double>(y.data(), y.size())); }

}  // namespace

EmbeddedManifold EmbeddedManifold::sphere(int n, double tau) {
  if (n < 1) throw InvalidArgument("sphere dimension must be positive");
  EmbeddedManifold M = implicit(n + 1, {sum_of_squares(1, n + 1) - Expr(1.0)}, tau);
  M.kind_ = ManifoldKind::Sphere;
  return M;
}

EmbeddedManifold EmbeddedManifold::torus(int k, double tau) {
  if (k < 1) throw InvalidArgument("torus needs at least one factor");
  std::vector<Expr> g;
  for (int i = 0; i < k; ++i) g.push_back(sum_of_squares(2 * i + 1, 2) - Expr(1.0));
  EmbeddedManifold M = implicit(2 * k, std::move(g), tau);
  M.kind_ = ManifoldKind::Torus;
  return M;
}

EmbeddedManifold EmbeddedManifold::implicit(int ambient_dim, std::vector<Expr> g, double tau) {
  if (ambient_dim < 1) throw InvalidArgument("ambient dimension must be positive");
  if (g.empty() || static_cast<int>(g.size()) >= ambient_dim)
    throw InvalidArgument("need between 1 and s-1 implicit equations");
  if (!(tau > 0.0)) throw InvalidArgument("tubular radius must be positive");
  const auto vars = ambient_variables(ambient_dim);
  const std::set<std::string> allowed(vars.begin(), vars.end());
  EmbeddedManifold M;
  M.kind_ = ManifoldKind::Implicit;
  M.ambient_ = ambient_dim;
  M.tau_ = tau;
  for (const auto& gi : g) {
    if (!is_smooth(gi)) throw InvalidArgument("implicit equations must be smooth");
    for (const auto& v : free_variables(gi))
      if (!allowed.count(v)) throw InvalidArgument("implicit equation uses unknown variable '" + v + "'");
    M.g_prog_.emplace_back(gi, vars);
    std::vector<Program> row;
    std::vector<std::vector<Program>> hess;
    for (int a = 0; a < ambient_dim; ++a) {
      const Expr da = differentiate(gi, vars[a]);
      row.emplace_back(da, vars);
      std::vector<Program> hrow;
      for (int b = 0; b < ambient_dim; ++b) hrow.emplace_back(differentiate(da, vars[b]), vars);
      hess.push_back(std::move(hrow));
    }
    M.jac_prog_.push_back(std::move(row));
    M.hess_prog_.push_back(std::move(hess));
  }
  M.g_ = std::move(g);
  return M;
}

Vector EmbeddedManifold::constraint(const Vector& p) const {
  if (p.size() != ambient_) throw InvalidArgument("point has wrong ambient dimension");
  Vector out(g_prog_.size());
  for (std::size_t i = 0; i < g_prog_.size(); ++i) out(i) = eval(g_prog_[i], p);
  return out;
}

Matrix EmbeddedManifold::constraint_jacobian(const Vector& p) const {
  Matrix J(g_prog_.size(), ambient_);
  for (std::size_t i = 0; i < g_prog_.size(); ++i)
    for (int a = 0; a < ambient_; ++a) J(i, a) = eval(jac_prog_[i][a], p);
  return J;
}

double EmbeddedManifold::guard_estimate(const Vector& p) const {
  const Vector g = constraint(p);
  const Eigen::JacobiSVD<Matrix> svd(constraint_jacobian(p));
  const double smin = svd.singularValues().minCoeff();
  if (!(smin > 0.0)) return std::numeric_limits<double>::infinity();
  return 2.0 * g.norm() / smin;
}

Vector EmbeddedManifold::newton_project(const Vector& p) const {
  const auto k = static_cast<Eigen::Index>(g_.size());
  const Eigen::Index s = ambient_;
  Vector q = p;
  // Gauss-Newton onto Y first, then Newton on the KKT system of min |q-p|^2
  for (int it = 0; it < 50; ++it) {
    const Vector g = constraint(q);
    if (g.norm() < 1e-14) break;
    const Matrix J = constraint_jacobian(q);
    q -= J.transpose() * (J * J.transpose()).ldlt().solve(g);
    if (!q.allFinite()) throw NewtonFailure("projection diverged");
  }
  Matrix J = constraint_jacobian(q);
  Vector lambda = -(J * J.transpose()).ldlt().solve(J * (q - p));
  for (int it = 0; it < 50; ++it) {
    J = constraint_jacobian(q);
    Vector F(s + k);
    F.head(s) = q - p + J.transpose() * lambda;
    F.tail(k) = constraint(q);
    if (F.norm() <= 1e-12 * std::max(1.0, p.norm())) return q;
    Matrix A = Matrix::Zero(s + k, s + k);
    A.topLeftCorner(s, s).setIdentity();
    for (Eigen::Index i = 0; i < k; ++i)
      for (Eigen::Index a = 0; a < s; ++a)
        for (Eigen::Index b = 0; b < s; ++b) A(a, b) += lambda(i) * eval(hess_prog_[i][a][b], q);
    A.topRightCorner(s, k) = J.transpose();
    A.bottomLeftCorner(k, s) = J;
    const Vector step = A.fullPivLu().solve(-F);
    q += step.head(s);
    lambda += step.tail(k);
    if (!q.allFinite()) throw NewtonFailure("projection diverged");
  }
  throw NewtonFailure("nearest-point Newton iteration did not converge in 50 steps");
}

double EmbeddedManifold::distance(const Vector& p) const {
  switch (kind_) {
    case ManifoldKind::Sphere: return std::abs(p.norm() - 1.0);
    case ManifoldKind::Torus: {
      double s = 0.0;
      for (int i = 0; i < ambient_ / 2; ++i) s += std::pow(p.segment(2 * i, 2).norm() - 1.0, 2);
      return std::sqrt(s);
    }
    case ManifoldKind::Implicit: break;
  }
  const double est = guard_estimate(p);
  if (!(est <= tau_)) return est;
  try {
    return (newton_project(p) - p).norm();
  } catch (const NewtonFailure&) {
    return est;
  }
}

Vector EmbeddedManifold::retract(const Vector& p) const {
  if (p.size() != ambient_) throw InvalidArgument("point has wrong ambient dimension");
  if (!p.allFinite()) throw InvalidArgument("point is not finite");
  // closed forms are valid away from the cut locus; the tube radius bounds
  // the inner side
  auto unit = [&](const Vector& v) -> Vector {
    const double r = v.norm();
    if (r <= 1.0 - tau_) throw OutsideTube("point lies outside the tubular neighbourhood (near the cut locus)", p, distance(p));
    return v / r;
  };
  switch (kind_) {
    case ManifoldKind::Sphere: return unit(p);
    case ManifoldKind::Torus: {
      Vector q(ambient_);
      for (int i = 0; i < ambient_ / 2; ++i) q.segment(2 * i, 2) = unit(p.segment(2 * i, 2));
      return q;
    }
    case ManifoldKind::Implicit: break;
  }
  const double est = guard_estimate(p);
  if (!(est <= tau_)) throw OutsideTube("point lies outside the tubular neighbourhood", p, est);
  const Vector q = newton_project(p);
  const double d = (q - p).norm();
  if (d > tau_) throw OutsideTube("point lies outside the tubular neighbourhood", p, d);
  return q;
}

Vector EmbeddedManifold::extend_retraction(const Vector& p) const {
  const double d = distance(p);
  const double inner = inner_tau();
  if (!(d < tau_)) return p;
  if (d <= inner) return retract(p);
  Vector r;
  try {
    r = retract(p);
  } catch (const Error&) {
    return p;
  }
  const double S = step_fn((d - inner) / (tau_ - inner));
  return (1.0 - S) * r + S * p;
}

std::optional<double> EmbeddedManifold::riemannian_distance(const Vector& p, const Vector& q) const {
  auto arc = [](const Vector& a, const Vector& b) { return 2.0 * std::asin(std::min(1.0, 0.5 * (a - b).norm())); };
  switch (kind_) {
    case ManifoldKind::Sphere: return arc(p, q);
    case ManifoldKind::Torus: {
      double s = 0.0;
      for (int i = 0; i < ambient_ / 2; ++i) s += std::pow(arc(p.segment(2 * i, 2), q.segment(2 * i, 2)), 2);
      return std::sqrt(s);
    }
    case ManifoldKind::Implicit: break;
  }
  return std::nullopt;
}

int EmbeddedManifold::parameter_dim() const {
  switch (kind_) {
    case ManifoldKind::Sphere: return ambient_ - 1;
    case ManifoldKind::Torus: return ambient_ / 2;
    case ManifoldKind::Implicit: break;
  }
  throw InvalidArgument("implicit manifolds have no built-in parametrization");
}

Vector EmbeddedManifold::parametrize(const Vector& angles) const {
  if (angles.size() != parameter_dim()) throw InvalidArgument("wrong number of angles");
  Vector y(ambient_);
  if (kind_ == ManifoldKind::Torus) {
    for (Eigen::Index i = 0; i < angles.size(); ++i) y.segment(2 * i, 2) << std::cos(angles(i)), std::sin(angles(i));
    return y;
  }
  // hyperspherical coordinates
  double prod = 1.0;
  const Eigen::Index n = angles.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    y(i) = prod * std::cos(angles(i));
    prod *= std::sin(angles(i));
  }
  y(n) = prod;
  return y;
}

nlohmann::json EmbeddedManifold::to_json() const {
  switch (kind_) {
    case ManifoldKind::Sphere: return {{"kind", "sphere"}, {"dim", ambient_ - 1}, {"tau", tau_}};
    case ManifoldKind::Torus: return {{"kind", "torus"}, {"factors", ambient_ / 2}, {"tau", tau_}};
    case ManifoldKind::Implicit: break;
  }
  std::vector<std::string> exprs;
  for (const auto& e : g_) exprs.push_back(to_string(e));
  return {{"kind", "implicit"}, {"ambient_dim", ambient_}, {"implicit_exprs", exprs}, {"tau", tau_}};
}

EmbeddedManifold EmbeddedManifold::from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "sphere") return sphere(j.value("dim", 1), j.value("tau", 0.9));
  if (kind == "torus") return torus(j.value("factors", 2), j.value("tau", 0.9));
  if (kind == "implicit") {
    const int s = j.at("ambient_dim").get<int>();
    ParseOptions po;
    po.variables = ambient_variables(s);
    std::vector<Expr> g;
    for (const auto& src : j.at("implicit_exprs").get<std::vector<std::string>>()) g.push_back(parse(src, po));
    return implicit(s, std::move(g), j.at("tau").get<double>());
  }
  throw InvalidArgument("unknown manifold kind '" + kind + "'");
}

// ---------------------------------------------------------------------------

ManifoldNet certify_manifold_net(const EpsNet& net, std::shared_ptr<const EmbeddedManifold> M,
                                 const std::vector<Box>& Ks, const CertifyOptions& opts) {
  if (net.target_dim() != M->ambient_dim()) throw InvalidArgument("net target dimension differs from ambient dimension");
  opts.grid.validate();
  const Vector eps = opts.grid.values();
  const auto J = static_cast<std::size_t>(eps.size());

  const Matrix X = net.domain().grid(opts.samples);
  std::vector<double> worst(J, 0.0);
  std::vector<Eigen::Index> where(J, 0);
  parallel_for(J, [&](std::size_t j) {
    for (Eigen::Index c = 0; c < X.cols(); ++c) {
      const double r = M->constraint(net(X.col(c), eps(j))).norm();
      if (!(r <= worst[j])) {
        worst[j] = std::isnan(r) ? std::numeric_limits<double>::infinity() : r;
        where[j] = c;
      }
    }
  });
  ManifoldNet out{net, M, 0.0, {}, true};
  for (std::size_t j = 0; j < J; ++j) {
    out.residual = std::max(out.residual, worst[j]);
    if (worst[j] > opts.tol)
      throw OffManifold("net leaves the manifold: |g(u)| = " + std::to_string(worst[j]) + " at eps = " +
                            std::to_string(eps(j)),
                        X.col(where[j]), eps(j), worst[j]);
  }

  const int s = M->ambient_dim();
  const int tail = std::min<int>(opts.tail, static_cast<int>(J));
  for (const Box& K : Ks) {
    ImageBound b;
    b.K = K;
    b.extent_growth.resize(static_cast<Eigen::Index>(J));
    Vector lo = Vector::Constant(s, std::numeric_limits<double>::infinity());
    Vector hi = -lo;
    const Matrix XK = K.grid(opts.samples);
    for (std::size_t j = 0; j < J; ++j) {
      double ext = 0.0;
      for (Eigen::Index c = 0; c < XK.cols(); ++c) {
        const Vector y = net(XK.col(c), eps(j));
        ext = std::max(ext, y.cwiseAbs().maxCoeff());
        if (j + tail >= J) {
          lo = lo.cwiseMin(y);
          hi = hi.cwiseMax(y);
        }
      }
      b.extent_growth(static_cast<Eigen::Index>(j)) = ext;
    }
    b.image = Box(lo, hi);
    // images must stay inside a fixed compact along the tail
    const Vector t = b.extent_growth.tail(tail);
    const int half = tail / 2;
    const double early = t.head(tail - half).maxCoeff(), late = t.tail(half).maxCoeff();
    b.stable = std::isfinite(late) && late <= 2.0 * early + 1e-12;
    out.bounds.push_back(b);
    if (!b.stable) {
      out.c_bounded = false;
      throw CBoundViolation("image of K grows without bound along the eps tail");
    }
  }
  return out;
}

namespace {

bool tends_to_zero(const Vector& eps, const Vector& series, const AsymptoticOptions& opts) {
  const SeriesFit fit = fit_series(eps, series, opts);
  if (fit.exact_zero || fit.reached_floor || fit.super_decay) return true;
  if (fit.overflow) return false;
  return fit.slope > opts.slope_tolerance && series(series.size() - 1) < series(0);
}

}  // namespace

ManifoldEquivVerdict manifold_equiv_test(const ManifoldNet& u, const ManifoldNet& v, const Box& K,
                                         const AsymptoticOptions& opts) {
  if (u.net.target_dim() != v.net.target_dim()) throw InvalidArgument("nets have different target dimensions");
  ManifoldEquivVerdict out;
  out.eps = opts.grid.values();
  const auto J = out.eps.size();
  const Matrix X = K.grid(opts.samples);
  const EmbeddedManifold& M = *u.manifold;
  const bool intrinsic = M.kind() != ManifoldKind::Implicit;
  out.sup_distance = Vector::Zero(J);
  Vector arc = Vector::Zero(J);
  parallel_for(static_cast<std::size_t>(J), [&](std::size_t jj) {
    const auto j = static_cast<Eigen::Index>(jj);
    for (Eigen::Index c = 0; c < X.cols(); ++c) {
      const Vector a = u.net(X.col(c), out.eps(j)), b = v.net(X.col(c), out.eps(j));
      out.sup_distance(j) = std::max(out.sup_distance(j), (a - b).norm());
      if (intrinsic) arc(j) = std::max(arc(j), *M.riemannian_distance(a, b));
    }
  });
  out.distance_to_zero = tends_to_zero(out.eps, out.sup_distance, opts);
  out.ambient = equiv_test(u.net.restricted(K), v.net.restricted(K), K, opts);
  out.equivalent = out.distance_to_zero && out.ambient.negligible();
  if (intrinsic) {
    out.sup_riemannian = arc;
    const bool by_arc = tends_to_zero(out.eps, arc, opts) && classify_negligible_series(out.eps, arc, opts).negligible();
    const bool by_chord = out.distance_to_zero &&
                          classify_negligible_series(out.eps, out.sup_distance, opts).negligible();
    out.riemannian_agrees = by_arc == by_chord;
  }
  return out;
}

nlohmann::json to_json(const ManifoldEquivVerdict& v) {
  nlohmann::json j{{"equivalent", v.equivalent},
                   {"distance_to_zero", v.distance_to_zero},
                   {"ambient", to_json(v.ambient)}};
  if (v.riemannian_agrees) j["riemannian_agrees"] = *v.riemannian_agrees;
  return j;
}

}  // namespace cgf
