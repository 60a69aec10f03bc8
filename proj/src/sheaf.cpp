#include "cgf/sheaf.hpp"

#include <algorithm>
#include <cmath>

namespace cgf {

namespace {

std::vector<std::string> x_vars(int m) {
  std::vector<std::string> v;
  for (int i = 1; i <= m; ++i) v.push_back("x" + std::to_string(i));
  return v;
}

// prod_i step((x_i - a_i - margin_i) / w_i) * step((b_i - margin_i - x_i) / w_i)
Expr transition_bump(const Box& U, double margin_frac, double width_frac) {
  Expr out(1.0);
  for (int i = 0; i < U.dim(); ++i) {
    const Expr x = Expr::variable("x" + std::to_string(i + 1));
    const double len = U.hi()(i) - U.lo()(i);
    const double m = margin_frac * len, w = width_frac * len;
    out = out * step((x - Expr(U.lo()(i) + m)) / Expr(w)) * step((Expr(U.hi()(i) - m) - x) / Expr(w));
  }
  return out;
}

double run(const Program& p, const Vector& x) { return p(std::span<const double>(x.data(), x.size())); }

nlohmann::json box_json(const Box& b) {
  nlohmann::json j = nlohmann::json::array();
  for (int i = 0; i < b.dim(); ++i) j.push_back({b.lo()(i), b.hi()(i)});
  return j;
}

}  // namespace

std::vector<std::pair<int, int>> OpenCover::overlaps() const {
  std::vector<std::pair<int, int>> out;
  for (std::size_t a = 0; a < sets.size(); ++a)
    for (std::size_t b = a + 1; b < sets.size(); ++b) {
      const Box I = sets[a].intersect(sets[b]);
      if (((I.hi() - I.lo()).array() > 0.0).all()) out.emplace_back(static_cast<int>(a), static_cast<int>(b));
    }
  return out;
}

void OpenCover::validate() const {
  if (sets.empty()) throw InvalidArgument("cover has no sets");
  for (const Box& U : sets) {
    if (U.dim() != X0.dim()) throw InvalidArgument("cover set has wrong dimension");
    if (!((U.hi() - U.lo()).array() > 0.0).all()) throw InvalidArgument("cover set is empty");
  }
}

Expr box_bump(const Box& U) { return transition_bump(U, 0.02, 0.2); }

Vector PartitionOfUnity::operator()(const Vector& x) const {
  Vector psi(psi_prog_.size());
  for (std::size_t a = 0; a < psi_prog_.size(); ++a) psi(a) = run(psi_prog_[a], x);
  const double s = psi.sum();
  if (!(s > 0.0)) throw NotACover("point is not covered", x);
  return psi / s;
}

PartitionOfUnity build_partition(const OpenCover& cover, int check_samples) {
  cover.validate();
  const int m = cover.dim();
  PartitionOfUnity pou;
  const auto vars = x_vars(m);
  Expr sum(0.0);
  for (const Box& U : cover.sets) {
    pou.bumps.push_back(box_bump(U));
    pou.psi_prog_.emplace_back(pou.bumps.back(), vars);
    sum = sum + pou.bumps.back();
  }
  pou.denominator = sum;
  for (const Expr& b : pou.bumps) pou.chi.push_back(b / sum);

  const int n = check_samples > 0 ? check_samples : (m == 1 ? 1024 : 64);
  const Matrix X = cover.X0.grid(n);
  const Program den(sum, vars);
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    if (run(den, X.col(c)) < 1e-9) {
      std::string where;
      for (Eigen::Index i = 0; i < X.rows(); ++i) where += (i ? "," : "") + std::to_string(X(i, c));
      throw NotACover("sets do not cover X0 (bump sum below 1e-9 at x=(" + where + "))", X.col(c));
    }
  }
  return pou;
}

// ---------------------------------------------------------------------------

double GluingSchedule::eta(const Vector& x) const { return run(eta_prog_, x); }

double GluingSchedule::mu(double eps, const Vector& x) const {
  const double e = eta(x);
  return e * nu_fn(eps / e);
}

nlohmann::json GluingSchedule::to_json() const {
  nlohmann::json ex = nlohmann::json::array();
  for (const Box& K : exhaustion_) ex.push_back(box_json(K));
  return {{"exhaustion", ex}, {"thresholds", thresholds_}, {"eta", to_string(eta_)}};
}

GluingSchedule build_schedule(std::vector<Box> exhaustion, std::vector<double> thresholds) {
  if (exhaustion.empty()) throw InvalidArgument("exhaustion is empty");
  if (thresholds.size() != exhaustion.size()) throw InvalidArgument("need one threshold per compact set");
  for (std::size_t l = 0; l < thresholds.size(); ++l) {
    if (!(thresholds[l] > 0.0)) throw InvalidArgument("thresholds must be positive");
    if (l > 0 && thresholds[l] > thresholds[l - 1]) throw InvalidArgument("thresholds must be non-increasing");
  }
  for (std::size_t l = 1; l < exhaustion.size(); ++l) {
    if (exhaustion[l].dim() != exhaustion[0].dim()) throw InvalidArgument("exhaustion boxes differ in dimension");
    if (!exhaustion[l].contains_interior(exhaustion[l - 1]))
      throw InvalidArgument("exhaustion must satisfy K_l inside the interior of K_{l+1}");
  }
  // eta = eps_L + sum_{j<L} (eps_j - eps_{j+1}) B_j with B_j = 1 on the middle
  // of K_j and zero outside its interior; on K_l minus the interior of K_{l-1}
  // only B_j with j >= l contribute, so eta <= eps_l there
  const std::size_t L = exhaustion.size();
  Expr eta(thresholds[L - 1]);
  for (std::size_t j = 0; j + 1 < L; ++j) {
    const double gap = thresholds[j] - thresholds[j + 1];
    if (gap > 0.0) eta = eta + Expr(gap) * transition_bump(exhaustion[j], 0.0, 0.25);
  }
  GluingSchedule s;
  s.exhaustion_ = std::move(exhaustion);
  s.thresholds_ = std::move(thresholds);
  s.eta_ = eta;
  s.mu_ = eta * nu(Expr::variable("eps") / eta);
  s.eta_prog_ = Program(eta, x_vars(s.dim()));
  return s;
}

EpsNet reparametrize(const EpsNet& net, const GluingSchedule& schedule) {
  if (net.dim() != schedule.dim()) throw InvalidArgument("schedule dimension differs from net dimension");
  if (net.symbolic()) {
    std::vector<Expr> comps;
    for (const Expr& e : net.expressions()) comps.push_back(substitute(e, "eps", schedule.mu_expr()));
    return EpsNet::from_exprs(net.domain(), std::move(comps));
  }
  return EpsNet::from_function(net.domain(), net.target_dim(), [net, schedule](const Vector& x, double eps) {
    return net(x, schedule.mu(eps, x));
  });
}

// ---------------------------------------------------------------------------

Box compact_part(const Box& U, const Box& X0) {
  Vector lo(U.dim()), hi(U.dim());
  for (int i = 0; i < U.dim(); ++i) {
    const double inset = 0.05 * (U.hi()(i) - U.lo()(i));
    lo(i) = std::max(U.lo()(i) + inset, X0.lo()(i));
    hi(i) = std::min(U.hi()(i) - inset, X0.hi()(i));
  }
  return Box(lo, hi);
}

namespace {

ManifoldNet restrict_to(const ManifoldNet& u, const Box& K) {
  ManifoldNet r = u;
  r.net = u.net.restricted(K);
  return r;
}

bool box_nonempty(const Box& b) { return ((b.hi() - b.lo()).array() > 0.0).all(); }

}  // namespace

CoherenceReport check_coherence(const std::vector<Patch>& family, const OpenCover& cover,
                                const AsymptoticOptions& opts) {
  if (family.size() != cover.sets.size()) throw InvalidArgument("one patch per cover set required");
  CoherenceReport rep;
  for (const auto& [a, b] : cover.overlaps()) {
    const Box O = compact_part(cover.sets[a].intersect(cover.sets[b]), cover.X0);
    if (!box_nonempty(O)) continue;
    PairCoherence pc;
    pc.a = a;
    pc.b = b;
    pc.overlap = O;
    pc.verdict = manifold_equiv_test(restrict_to(family[a].net, O), restrict_to(family[b].net, O), O, opts);
    pc.coherent = pc.verdict.equivalent;
    rep.coherent = rep.coherent && pc.coherent;
    rep.pairs.push_back(std::move(pc));
  }
  return rep;
}

nlohmann::json to_json(const CoherenceReport& r) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : r.pairs)
    pairs.push_back({{"a", p.a}, {"b", p.b}, {"overlap", box_json(p.overlap)}, {"coherent", p.coherent},
                     {"verdict", to_json(p.verdict)}});
  return {{"coherent", r.coherent}, {"pairs", pairs}};
}

namespace {

class GluedSource final : public NetSource {
 public:
  GluedSource(std::vector<Patch> family, PartitionOfUnity pou, GluingSchedule schedule,
              std::shared_ptr<const EmbeddedManifold> M)
      : family_(std::move(family)), pou_(std::move(pou)), schedule_(std::move(schedule)), M_(std::move(M)) {}

  int target_dim() const override { return M_->ambient_dim(); }

  Vector combination(const Vector& x, double eps) const {
    const double mu = schedule_.mu(eps, x);
    const Vector chi = pou_(x);
    Vector p = Vector::Zero(M_->ambient_dim());
    for (std::size_t a = 0; a < family_.size(); ++a)
      if (chi(a) > 0.0) p += chi(a) * family_[a].net.net(x, mu);
    return p;
  }

  Vector value(const Vector& x, double eps) const override { return M_->extend_retraction(combination(x, eps)); }

 private:
  std::vector<Patch> family_;
  PartitionOfUnity pou_;
  GluingSchedule schedule_;
  std::shared_ptr<const EmbeddedManifold> M_;
};

}  // namespace

GlueResult glue(const std::vector<Patch>& family, const OpenCover& cover, const PartitionOfUnity& pou,
                const GluingSchedule& schedule, const GlueOptions& opts) {
  cover.validate();
  if (family.size() != cover.sets.size() || pou.size() != cover.sets.size())
    throw InvalidArgument("family, cover and partition sizes differ");
  if (schedule.dim() != cover.dim()) throw InvalidArgument("schedule dimension differs from cover dimension");
  const auto M = family.front().net.manifold;
  for (const Patch& p : family)
    if (p.net.manifold->ambient_dim() != M->ambient_dim()) throw InvalidArgument("patches map into different spaces");

  CoherenceReport coherence;
  if (opts.check_coherence) {
    coherence = check_coherence(family, cover, opts.equiv);
    for (const auto& pc : coherence.pairs)
      if (!pc.coherent)
        throw Error("coherence failure on the overlap of patches " + std::to_string(pc.a) + " and " +
                    std::to_string(pc.b));
  }
  const double delta = 0.5 * M->inner_tau();

  // tighten eps_l until patches overlapping at a point of K_l differ by < delta
  std::vector<double> thr = schedule.thresholds();
  int total_halvings = 0;
  const Vector grid_eps = opts.grid.values();
  for (std::size_t l = 0; l < thr.size(); ++l) {
    if (l > 0) thr[l] = std::min(thr[l], thr[l - 1]);
    const Matrix X = schedule.exhaustion()[l].intersect(cover.X0).grid(opts.samples);
    auto worst_gap = [&](double cap) {
      double worst = 0.0;
      for (Eigen::Index c = 0; c < X.cols(); ++c) {
        const Vector x = X.col(c);
        const Vector chi = pou(x);
        std::vector<std::size_t> live;
        for (std::size_t a = 0; a < family.size(); ++a)
          if (chi(a) > 0.0) live.push_back(a);
        if (live.size() < 2) continue;
        std::vector<double> eps_list{cap};
        for (Eigen::Index j = 0; j < grid_eps.size(); ++j)
          if (grid_eps(j) < cap) eps_list.push_back(grid_eps(j));
        for (double e : eps_list) {
          const Vector ref = family[live[0]].net.net(x, e);
          for (std::size_t k = 1; k < live.size(); ++k)
            worst = std::max(worst, (family[live[k]].net.net(x, e) - ref).norm());
        }
      }
      return worst;
    };
    int halvings = 0;
    while (!(worst_gap(thr[l]) < delta)) {
      if (++halvings > opts.max_halvings)
        throw GluingFailure("patches differ by more than delta on K_" + std::to_string(l + 1) +
                                " after " + std::to_string(opts.max_halvings) + " threshold halvings",
                            schedule.exhaustion()[l].center(), thr[l]);
      thr[l] *= 0.5;
    }
    total_halvings += halvings;
  }
  GluingSchedule tightened = build_schedule(schedule.exhaustion(), thr);

  auto src = std::make_shared<GluedSource>(family, pou, tightened, M);
  // the convex combinations must stay in the inner tube
  const Matrix X = cover.X0.grid(opts.samples);
  for (Eigen::Index j = 0; j < grid_eps.size(); ++j)
    for (Eigen::Index c = 0; c < X.cols(); ++c) {
      const double d = M->distance(src->combination(X.col(c), grid_eps(j)));
      if (!(d <= M->inner_tau()))
        throw GluingFailure("convex combination leaves the inner tube (distance " + std::to_string(d) + ")",
                            X.col(c), grid_eps(j));
    }

  const EpsNet net(cover.X0, src);
  CertifyOptions co;
  co.grid = opts.grid;
  co.tol = 1e-10;
  return GlueResult{certify_manifold_net(net, M, {cover.X0}, co), std::move(tightened), delta, total_halvings,
                    std::move(coherence)};
}

std::vector<ManifoldEquivVerdict> verify_restrictions(const ManifoldNet& glued, const std::vector<Patch>& family,
                                                      const OpenCover& cover, const AsymptoticOptions& opts) {
  std::vector<ManifoldEquivVerdict> out;
  for (std::size_t b = 0; b < family.size(); ++b) {
    const Box L = compact_part(cover.sets[b], cover.X0);
    out.push_back(manifold_equiv_test(restrict_to(glued, L), restrict_to(family[b].net, L), L, opts));
  }
  return out;
}

}  // namespace cgf
