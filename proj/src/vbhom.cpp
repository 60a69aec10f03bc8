#include "cgf/vbhom.hpp"

#include <cmath>
#include <random>

namespace cgf {

VBNet::VBNet(EpsNet base, EpsNet fiber, int rows, int cols, std::shared_ptr<const EmbeddedManifold> manifold)
    : base_(std::move(base)), fiber_(std::move(fiber)), rows_(rows), cols_(cols), manifold_(std::move(manifold)) {
  if (rows_ < 1 || cols_ < 1 || fiber_.target_dim() != rows_ * cols_)
    throw InvalidArgument("fibre net does not have rows * cols components");
  if (base_.dim() != fiber_.dim()) throw InvalidArgument("base and fibre live on different domains");
  if (manifold_ && manifold_->ambient_dim() != base_.target_dim())
    throw InvalidArgument("manifold and base differ in ambient dimension");
}

Matrix VBNet::fiber_at(const Vector& x, double eps) const {
  const Vector a = fiber_(x, eps);
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(a.data(), rows_,
                                                                                                  cols_);
}

std::pair<Vector, Vector> VBNet::operator()(const Vector& x, const Vector& xi, double eps) const {
  if (xi.size() != cols_) throw InvalidArgument("fibre vector has the wrong length");
  return {base_(x, eps), fiber_at(x, eps) * xi};
}

const Expr& VBNet::entry(int i, int j) const {
  if (!fiber_.symbolic()) throw InvalidArgument("fibre is not symbolic");
  return fiber_.expressions()[static_cast<std::size_t>(i * cols_ + j)];
}

VBNet parse_vbnet(const Box& domain, const std::vector<std::string>& base,
                  const std::vector<std::vector<std::string>>& fiber,
                  std::shared_ptr<const EmbeddedManifold> manifold) {
  if (fiber.empty() || fiber.front().empty()) throw InvalidArgument("empty fibre matrix");
  std::vector<std::string> flat;
  for (const auto& row : fiber) {
    if (row.size() != fiber.front().size()) throw InvalidArgument("ragged fibre matrix");
    flat.insert(flat.end(), row.begin(), row.end());
  }
  return VBNet(EpsNet::parse(domain, base), EpsNet::parse(domain, flat), static_cast<int>(fiber.size()),
               static_cast<int>(fiber.front().size()), std::move(manifold));
}

double tangent_fd_gap(const VBNet& v, double eps, int points, unsigned seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Box& D = v.base().domain();
  const int m = D.dim();
  double gap = 0.0;
  for (int p = 0; p < points; ++p) {
    Vector x(m);
    for (int i = 0; i < m; ++i) x(i) = D.lo()(i) + unit(gen) * D.extent()(i);
    const Matrix J = v.fiber_at(x, eps);
    for (int j = 0; j < m; ++j) {
      MultiIndex alpha(static_cast<std::size_t>(m), 0);
      alpha[static_cast<std::size_t>(j)] = 1;
      const Vector fd = finite_difference_partial(*v.base().source(), x, eps, alpha);
      for (int i = 0; i < v.rows(); ++i)
        gap = std::max(gap, std::abs(fd(i) - J(i, j)) / std::max(1.0, std::abs(J(i, j))));
    }
  }
  return gap;
}

VBNet tangent(const EpsNet& net, std::shared_ptr<const EmbeddedManifold> manifold) {
  if (!net.symbolic()) throw InvalidArgument("tangent needs a symbolic net");
  const auto vars = net_variables(net.dim());
  std::vector<Expr> jac;
  for (const Expr& c : net.expressions())
    for (int j = 0; j < net.dim(); ++j) jac.push_back(differentiate(c, vars[static_cast<std::size_t>(j)]));
  EpsNet fiber = EpsNet::from_exprs(net.domain(), std::move(jac));
  if (net.scale_hint()) fiber = fiber.with_scale_hint(*net.scale_hint());
  VBNet v(net, std::move(fiber), net.target_dim(), net.dim(), std::move(manifold));
  // relative FD accuracy degrades like (h / eps)^2, so check at a moderate eps
  if (tangent_fd_gap(v, 0.1, 4) > 1e-4) throw Error("symbolic Jacobian disagrees with finite differences");
  return v;
}

VBVerdict vb_moderate(const VBNet& v, const Box& K, int k_max, const AsymptoticOptions& opts) {
  VBVerdict r;
  r.base = classify_moderate(v.base(), K, k_max, opts);
  AsymptoticOptions o = opts;
  o.norm = NormKind::MaxAbs;
  r.fiber = classify_moderate(v.fiber(), K, k_max, o);
  r.holds = r.base.moderate() && r.fiber.moderate();
  return r;
}

VBVerdict vb_equiv(const VBNet& u, const VBNet& v, const Box& K, const AsymptoticOptions& opts) {
  if (u.rows() != v.rows() || u.cols() != v.cols() || u.base().target_dim() != v.base().target_dim())
    throw InvalidArgument("vb-nets differ in shape");
  VBVerdict r;
  if (u.manifold() && v.manifold()) {
    const ManifoldNet mu{u.base(), u.manifold(), 0.0, {}, true}, mv{v.base(), v.manifold(), 0.0, {}, true};
    r.manifold = manifold_equiv_test(mu, mv, K, opts);
    r.base = r.manifold->ambient;
  } else {
    r.base = equiv_test(u.base(), v.base(), K, opts);
  }
  AsymptoticOptions o = opts;
  o.norm = NormKind::MaxAbs;
  r.fiber = classify_negligible(u.fiber() - v.fiber(), K, o);
  const bool base_ok = r.manifold ? r.manifold->equivalent : r.base.negligible();
  r.holds = base_ok && r.fiber.negligible();
  return r;
}

nlohmann::json to_json(const VBVerdict& v) {
  nlohmann::json j{{"holds", v.holds}, {"base", to_json(v.base)}, {"fiber", to_json(v.fiber)}};
  if (v.manifold) j["manifold"] = to_json(*v.manifold);
  return j;
}

namespace {

// out_i = sum_k L(i, k) in_k, symbolic when the input is
EpsNet linear_image(const Matrix& L, const EpsNet& net, const Vector& shift) {
  if (L.cols() != net.target_dim() || shift.size() != L.rows()) throw InvalidArgument("linear map has the wrong shape");
  if (net.symbolic()) {
    std::vector<Expr> out;
    for (Eigen::Index i = 0; i < L.rows(); ++i) {
      Expr e(shift(i));
      for (Eigen::Index k = 0; k < L.cols(); ++k)
        if (L(i, k) != 0.0) e = e + Expr(L(i, k)) * net.expressions()[static_cast<std::size_t>(k)];
      out.push_back(e);
    }
    EpsNet r = EpsNet::from_exprs(net.domain(), std::move(out));
    return net.scale_hint() ? r.with_scale_hint(*net.scale_hint()) : r;
  }
  return EpsNet::from_function(net.domain(), static_cast<int>(L.rows()),
                               [L, net, shift](const Vector& x, double e) -> Vector { return L * net(x, e) + shift; });
}

// row-major vec(Psi A Phi^-1) as a matrix acting on row-major vec(A)
Matrix conjugation(const Matrix& psi, const Matrix& phi_inv) {
  const auto r = psi.rows(), c = phi_inv.cols();
  Matrix K = Matrix::Zero(r * c, psi.cols() * phi_inv.rows());
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j)
      for (Eigen::Index k = 0; k < psi.cols(); ++k)
        for (Eigen::Index l = 0; l < phi_inv.rows(); ++l) K(i * c + j, k * phi_inv.rows() + l) = psi(i, k) * phi_inv(l, j);
  return K;
}

}  // namespace

VBNet transform(const VBNet& v, const Matrix& phi, const Matrix& psi, const Vector& shift) {
  if (phi.rows() != v.cols() || phi.cols() != v.cols()) throw InvalidArgument("source chart has the wrong shape");
  if (psi.rows() != v.rows() || psi.cols() != v.rows()) throw InvalidArgument("target chart has the wrong shape");
  const Eigen::FullPivLU<Matrix> lu(phi);
  if (!lu.isInvertible()) throw InvalidArgument("source chart is singular");
  const Matrix phi_inv = lu.inverse();
  EpsNet base = v.base();
  if (psi.rows() == v.base().target_dim()) base = linear_image(psi, v.base(), shift);
  else if (shift.size() != 0) throw InvalidArgument("affine base change needs a square fibre over the base");
  const EpsNet fiber = linear_image(conjugation(psi, phi_inv), v.fiber(), Vector::Zero(v.rows() * v.cols()));
  return VBNet(std::move(base), fiber, v.rows(), v.cols());
}

VBNet embed_vb_continuous(const SampledMap& base, const SampledMap& fiber, int rows, int cols, const Mollifier& rho,
                          std::shared_ptr<const EmbeddedManifold> manifold, const VBEmbedOptions& opts) {
  if (fiber.target_dim() != rows * cols) throw InvalidArgument("fibre data does not have rows * cols components");
  bool smooth = base.regularity() == Regularity::Smooth;
  if (base.analytic())
    for (const Expr& e : base.expressions()) smooth = smooth && is_smooth(e);
  if (!smooth && base.regularity() == Regularity::Bounded) throw InvalidArgument("base data must be continuous");
  if (!smooth && fiber.regularity() == Regularity::Bounded)
    throw InvalidArgument("rough fibre entries need a smooth base");

  EpsNet b = smooth ? sigma(base)
                    : (manifold ? embed_continuous_map(base, manifold, rho, opts.exhaustion, opts.embed).net.net
                                : embed_scalar(base, rho, opts.embed.conv));
  if (smooth && manifold)
    for (const Vector& y : {base(base.domain().center()), base(base.domain().lo()), base(base.domain().hi())})
      if (manifold->constraint(y).norm() > 1e-8) throw InvalidArgument("base leaves the manifold");
  return VBNet(std::move(b), embed_scalar(fiber, rho, opts.embed.conv), rows, cols, std::move(manifold));
}

namespace {

// For each f: the row grad f(u_eps) A_eps, stacked over f.
EpsNet pulled_differentials(const VBNet& v, const TestFamily& F) {
  const int s = v.base().target_dim(), cols = v.cols();
  const auto ys = ambient_variables(s);
  std::vector<std::vector<Expr>> grads;
  for (const Expr& f : F.functions) {
    std::vector<Expr> g;
    for (const auto& y : ys) g.push_back(differentiate(f, y));
    grads.push_back(std::move(g));
  }
  std::optional<Expr> hint = v.base().scale_hint() ? v.base().scale_hint() : v.fiber().scale_hint();
  EpsNet out = [&] {
    if (v.base().symbolic() && v.fiber().symbolic()) {
      std::vector<Expr> comps;
      for (const auto& g : grads) {
        std::vector<Expr> gu;
        for (const Expr& gi : g) {
          Expr e = gi;
          for (int k = 0; k < s; ++k) e = substitute(e, ys[static_cast<std::size_t>(k)], v.base().expressions()[static_cast<std::size_t>(k)]);
          gu.push_back(e);
        }
        for (int j = 0; j < cols; ++j) {
          Expr e(0.0);
          for (int k = 0; k < s; ++k) e = e + gu[static_cast<std::size_t>(k)] * v.entry(k, j);
          comps.push_back(e);
        }
      }
      return EpsNet::from_exprs(v.base().domain(), std::move(comps));
    }
    std::vector<std::vector<Program>> progs;
    for (const auto& g : grads) {
      std::vector<Program> p;
      for (const Expr& gi : g) p.emplace_back(gi, ys);
      progs.push_back(std::move(p));
    }
    const int n = static_cast<int>(grads.size()) * cols;
    return EpsNet::from_function(v.base().domain(), n, [v, progs, s, cols](const Vector& x, double e) {
      const Vector y = v.base()(x, e);
      const Matrix A = v.fiber_at(x, e);
      const std::span<const double> args(y.data(), static_cast<std::size_t>(s));
      Vector out(static_cast<Eigen::Index>(progs.size()) * cols);
      for (std::size_t f = 0; f < progs.size(); ++f) {
        Eigen::RowVectorXd g(s);
        for (int k = 0; k < s; ++k) g(k) = progs[f][static_cast<std::size_t>(k)](args);
        out.segment(static_cast<Eigen::Index>(f) * cols, cols) = (g * A).transpose();
      }
      return out;
    });
  }();
  return hint ? out.with_scale_hint(*hint) : out;
}

}  // namespace

ModelVBVerdict model_vb_equiv(const VBNet& u, const VBNet& v, const TestFamily& F,
                              const std::vector<TestFunction>& phis, const PairingOptions& opts) {
  if (u.rows() != v.rows() || u.cols() != v.cols() || u.base().target_dim() != v.base().target_dim())
    throw InvalidArgument("vb-nets differ in shape");
  if (u.rows() != u.base().target_dim()) throw InvalidArgument("fibre rows must match the base target dimension");
  ModelVBVerdict r;
  r.base = model_assoc_test(u.base(), v.base(), F, phis, opts);
  const EpsNet du = pulled_differentials(u, F), dv = pulled_differentials(v, F);
  TestFamily coords = TestFamily::coordinates(du.target_dim());
  // label rows by (f, column)
  for (std::size_t f = 0; f < F.functions.size(); ++f)
    for (int j = 0; j < u.cols(); ++j)
      coords.labels[f * static_cast<std::size_t>(u.cols()) + static_cast<std::size_t>(j)] =
          "d(" + F.labels[f] + ")/dx" + std::to_string(j + 1);
  coords.name = "differentials of " + F.name;
  r.fiber = model_assoc_test(du, dv, coords, phis, opts);
  r.equivalent = r.base.associated && r.fiber.associated;
  r.inconclusive = !r.equivalent && (r.base.inconclusive || r.fiber.inconclusive);
  return r;
}

nlohmann::json to_json(const ModelVBVerdict& v) {
  return {{"equivalent", v.equivalent}, {"inconclusive", v.inconclusive}, {"base", to_json(v.base)},
          {"fiber", to_json(v.fiber)}};
}

VBGlueResult glue_vb(const std::vector<VBPatch>& family, const OpenCover& cover, const PartitionOfUnity& pou,
                     const GluingSchedule& schedule, const GlueOptions& opts) {
  if (family.empty()) throw InvalidArgument("empty family");
  const auto M = family.front().net.manifold();
  if (!M) throw InvalidArgument("gluing needs a manifold target");
  const int rows = family.front().net.rows(), cols = family.front().net.cols();
  std::vector<Patch> bases;
  std::vector<EpsNet> fibers;
  for (const auto& p : family) {
    if (p.net.rows() != rows || p.net.cols() != cols || p.net.manifold() != M)
      throw InvalidArgument("patches differ in shape or target");
    CertifyOptions co;
    co.grid = opts.grid;
    bases.push_back({p.U, certify_manifold_net(p.net.base(), M, {p.U}, co)});
    fibers.push_back(p.net.fiber());
  }
  GlueResult g = glue(bases, cover, pou, schedule, opts);
  const GluingSchedule sched = g.schedule;
  const EpsNet fiber = EpsNet::from_function(cover.X0, rows * cols, [pou, sched, fibers](const Vector& x, double e) {
    const Vector chi = pou(x);
    const double mu = sched.mu(e, x);
    Vector a = Vector::Zero(fibers.front().target_dim());
    for (std::size_t k = 0; k < fibers.size(); ++k)
      if (chi(static_cast<Eigen::Index>(k)) != 0.0) a += chi(static_cast<Eigen::Index>(k)) * fibers[k](x, mu);
    return a;
  });
  VBNet net(g.net.net, fiber, rows, cols, M);
  return VBGlueResult{std::move(g), std::move(net)};
}

}  // namespace cgf
