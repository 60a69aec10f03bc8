#include "cgf/mapsembed.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace cgf {

namespace {

// Points at which input data is checked: grid nodes for tabulated data,
// a sample grid otherwise.
std::vector<Vector> data_points(const SampledMap& u, int samples) {
  std::vector<Vector> out;
  if (!u.analytic()) {
    const auto s = static_cast<std::size_t>(u.target_dim());
    for (std::size_t p = 0; p < u.values().size() / s; ++p)
      out.push_back(Eigen::Map<const Vector>(u.values().data() + p * s, static_cast<Eigen::Index>(s)));
    return out;
  }
  const Matrix X = u.domain().grid(samples);
  for (Eigen::Index c = 0; c < X.cols(); ++c) out.push_back(u(X.col(c)));
  return out;
}

}  // namespace

EpsNet sigma(const SampledMap& u) {
  if (u.analytic()) {
    bool smooth = true;
    for (const Expr& e : u.expressions()) smooth = smooth && is_smooth(e);
    if (smooth) return EpsNet::from_exprs(u.domain(), u.expressions());
  }
  if (u.regularity() != Regularity::Smooth) throw InvalidArgument("sigma needs smooth data");
  return EpsNet::from_function(u.domain(), u.target_dim(), [u](const Vector& x, double) { return u(x); });
}

ContinuousEmbedding embed_continuous_map(const SampledMap& u, std::shared_ptr<const EmbeddedManifold> M,
                                         const Mollifier& rho, std::vector<Box> exhaustion,
                                         const EmbedOptions& opts) {
  if (u.target_dim() != M->ambient_dim()) throw InvalidArgument("map target dimension differs from ambient dimension");
  if (u.regularity() == Regularity::Bounded) throw InvalidArgument("embed_continuous_map needs continuous data");
  for (const Vector& y : data_points(u, opts.samples))
    if (M->constraint(y).norm() > 1e-8) throw InvalidArgument("input map leaves the manifold");
  if (exhaustion.empty()) exhaustion.push_back(u.domain());

  const auto conv = std::make_shared<Convolver>(rho, opts.conv);
  const EpsNet smoothed = embed_scalar(u, conv);
  const Vector eps = opts.grid.values();
  const auto J = eps.size();

  std::vector<double> thresholds;
  for (const Box& K : exhaustion) {
    const Matrix X = K.grid(opts.samples);
    std::vector<char> inside(static_cast<std::size_t>(J));
    parallel_for(static_cast<std::size_t>(J), [&](std::size_t j) {
      double worst = 0.0;
      for (Eigen::Index c = 0; c < X.cols() && worst < M->inner_tau(); ++c)
        worst = std::max(worst, M->distance(smoothed(X.col(c), eps(static_cast<Eigen::Index>(j)))));
      inside[j] = worst < M->inner_tau();
    });
    // largest grid eps below which every grid eps keeps K inside the tube
    Eigen::Index first = J;
    while (first > 0 && inside[static_cast<std::size_t>(first - 1)]) --first;
    if (first == J)
      throw TubularObstruction("mollified map leaves the tube on a compact set for every grid eps");
    double t = eps(first);
    if (!thresholds.empty()) t = std::min(t, thresholds.back());
    thresholds.push_back(t);
  }
  GluingSchedule schedule = build_schedule(exhaustion, thresholds);

  const EpsNet net = EpsNet::from_function(u.domain(), u.target_dim(),
                                           [smoothed, schedule, M](const Vector& x, double e) {
                                             return M->retract(smoothed(x, schedule.mu(e, x)));
                                           });
  CertifyOptions co;
  co.grid = opts.grid;
  co.samples = opts.samples;
  co.tol = opts.certify_tol;
  return ContinuousEmbedding{certify_manifold_net(net, M, exhaustion, co), smoothed, std::move(schedule)};
}

ProbeReport tubular_failure_probe(const SampledMap& u, const EmbeddedManifold& M, const Mollifier& rho,
                                  const EpsGrid& grid, int samples, const ConvolutionOptions& conv_opts) {
  if (u.target_dim() != M.ambient_dim()) throw InvalidArgument("map target dimension differs from ambient dimension");
  if (samples % 2 == 0) ++samples;
  const Convolver conv(rho, conv_opts);
  ProbeReport r;
  r.eps = grid.values();
  const auto J = r.eps.size();
  r.max_distance = Vector::Zero(J);
  r.witness.assign(static_cast<std::size_t>(J), Vector());
  const Matrix X = u.domain().grid(samples);
  parallel_for(static_cast<std::size_t>(J), [&](std::size_t jj) {
    const auto j = static_cast<Eigen::Index>(jj);
    double worst = -1.0;
    for (Eigen::Index c = 0; c < X.cols(); ++c) {
      const double d = M.distance(conv.convolve(u, r.eps(j), X.col(c)));
      if (d > worst) {
        worst = d;
        r.witness[jj] = X.col(c);
      }
    }
    r.max_distance(j) = worst;
  });
  r.containment_bound = r.max_distance.minCoeff();
  r.obstructed = r.containment_bound >= M.tau();
  return r;
}

nlohmann::json to_json(const ProbeReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index j = 0; j < r.eps.size(); ++j) {
    const Vector& w = r.witness[static_cast<std::size_t>(j)];
    rows.push_back({{"eps", r.eps(j)},
                    {"max_distance", r.max_distance(j)},
                    {"witness", std::vector<double>(w.data(), w.data() + w.size())}});
  }
  return {{"series", rows}, {"containment_bound", r.containment_bound}, {"obstructed", r.obstructed}};
}

namespace {

ManifoldNet embed_angles(const SampledMap& lift, const Mollifier& rho, const EmbedOptions& opts,
                         std::shared_ptr<const EmbeddedManifold> M) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  for (const Vector& v : data_points(lift, lift.dim() == 1 ? 257 : 33))
    if ((v.array() < 0.0).any() || (v.array() >= two_pi).any())
      throw InvalidArgument("lift values must lie in [0, 2 pi)");
  const EpsNet bar = embed_scalar(lift, rho, opts.conv);
  std::vector<Expr> outer;
  for (int i = 1; i <= lift.target_dim(); ++i) {
    const Expr y = Expr::variable("y" + std::to_string(i));
    outer.push_back(cos(y));
    outer.push_back(sin(y));
  }
  CertifyOptions co;
  co.grid = opts.grid;
  co.samples = opts.samples;
  co.tol = opts.certify_tol;
  return certify_manifold_net(compose(outer, bar), std::move(M), {lift.domain()}, co);
}

}  // namespace

ManifoldNet embed_circle_valued(const SampledMap& lift, const Mollifier& rho, const EmbedOptions& opts) {
  if (lift.target_dim() != 1) throw InvalidArgument("circle lift must be scalar");
  return embed_angles(lift, rho, opts, std::make_shared<const EmbeddedManifold>(EmbeddedManifold::sphere(1)));
}

ManifoldNet embed_torus_valued(const SampledMap& lift, const Mollifier& rho, const EmbedOptions& opts) {
  return embed_angles(lift, rho, opts,
                      std::make_shared<const EmbeddedManifold>(EmbeddedManifold::torus(lift.target_dim())));
}

}  // namespace cgf
