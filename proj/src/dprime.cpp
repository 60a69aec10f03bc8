#include "cgf/dprime.hpp"

#include "cgf/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace cgf {

namespace {

constexpr int kPanelOrder = 16;

double bump1(double t) { return std::abs(t) < 1.0 ? std::exp(-1.0 / (1.0 - t * t)) : 0.0; }

// integral of bump1 over [-1, 1]; the integrand is flat at both ends, so a
// single high-order rule is spectrally accurate
double bump1_integral() {
  static const double value = integrate<double>(bump1, -1.0, 1.0, 4, 64);
  return value;
}

std::vector<Program> compile_family(const std::vector<Expr>& fs, int s) {
  const auto slots = ambient_variables(s);
  std::vector<Program> out;
  for (const Expr& f : fs) out.emplace_back(f, slots);
  return out;
}

const std::optional<Expr>& effective_scale(const EpsNet& net, const PairingOptions& opts) {
  return opts.scale ? opts.scale : net.scale_hint();
}

long initial_nodes(double length, const std::optional<Expr>& scale, double eps, const PairingOptions& opts) {
  if (!scale) return opts.base_nodes;
  const double s = std::abs(evaluate(*scale, {{"eps", eps}}));
  if (!(s > 0.0)) return opts.max_nodes_per_axis + 1;
  const double wavelength = 2.0 * std::numbers::pi * s;
  const double n = std::ceil(opts.nodes_per_wavelength * length / wavelength);
  return std::max<long>(256, static_cast<long>(std::min(n, 1e15)));
}

// Tensor composite Gauss-Legendre rule over a box, evaluated in chunks.
struct TensorRule {
  std::vector<Vector> nodes, weights;  // per axis
  long total = 1;

  TensorRule(const Box& box, long n) {
    const int panels = static_cast<int>((n + kPanelOrder - 1) / kPanelOrder);
    for (int i = 0; i < box.dim(); ++i) {
      const CompositeRule<double> r(box.lo()(i), box.hi()(i), panels, kPanelOrder);
      nodes.push_back(r.nodes);
      weights.push_back(r.weights);
      total *= r.nodes.size();
    }
  }

  // calls fn(x, w) for each node with flat index in [begin, end)
  template <typename Fn>
  void visit(long begin, long end, Fn&& fn) const {
    const auto m = static_cast<Eigen::Index>(nodes.size());
    Vector x(m);
    for (long k = begin; k < end; ++k) {
      long rest = k;
      double w = 1.0;
      for (Eigen::Index i = m - 1; i >= 0; --i) {
        const auto n = nodes[static_cast<std::size_t>(i)].size();
        const auto idx = static_cast<Eigen::Index>(rest % n);
        rest /= n;
        x(i) = nodes[static_cast<std::size_t>(i)](idx);
        w *= weights[static_cast<std::size_t>(i)](idx);
      }
      fn(x, w);
    }
  }
};

struct Sums {
  std::vector<double> value;  // sum of w phi f_k(u)
  std::vector<double> mass;   // sum of |w phi f_k(u)|, the cancellation scale
};

// node sums for every f_k, accumulated in a fixed chunk order
Sums quadrature_sums(const EpsNet& net, const std::vector<Program>& fs, const TestFunction& phi,
                                    double eps, long n) {
  const TensorRule rule(phi.support(), n);
  const std::size_t chunks = 256;
  const long per = (rule.total + static_cast<long>(chunks) - 1) / static_cast<long>(chunks);
  std::vector<std::vector<double>> partial(chunks, std::vector<double>(2 * fs.size(), 0.0));
  parallel_for(chunks, [&](std::size_t c) {
    const long begin = static_cast<long>(c) * per, end = std::min(rule.total, begin + per);
    auto& acc = partial[c];
    rule.visit(begin, end, [&](const Vector& x, double w) {
      const double pw = w * phi(x);
      if (pw == 0.0) return;
      const Vector y = net(x, eps);
      const std::span<const double> args(y.data(), static_cast<std::size_t>(y.size()));
      for (std::size_t k = 0; k < fs.size(); ++k) {
        const double t = pw * fs[k](args);
        acc[2 * k] += t;
        acc[2 * k + 1] += std::abs(t);
      }
    });
  });
  Sums out{std::vector<double>(fs.size(), 0.0), std::vector<double>(fs.size(), 0.0)};
  for (const auto& p : partial)
    for (std::size_t k = 0; k < fs.size(); ++k) {
      out.value[k] += p[2 * k];
      out.mass[k] += p[2 * k + 1];
    }
  return out;
}

}  // namespace

TestFunction::TestFunction(Vector center, Vector half_width, bool normalize)
    : center_(std::move(center)), half_width_(std::move(half_width)) {
  if (center_.size() == 0 || center_.size() != half_width_.size())
    throw InvalidArgument("test function center and width differ in dimension");
  if ((half_width_.array() <= 0.0).any()) throw InvalidArgument("test function width must be positive");
  double base = 1.0;
  for (Eigen::Index i = 0; i < center_.size(); ++i) base *= half_width_(i) * bump1_integral();
  scale_ = normalize ? 1.0 / base : 1.0;
  integral_ = scale_ * base;

  Expr e(scale_);
  for (Eigen::Index i = 0; i < center_.size(); ++i) {
    const Expr t = (Expr::variable("x" + std::to_string(i + 1)) - Expr(center_(i))) / Expr(half_width_(i));
    e = e * flat(Expr(1.0) - t * t);
  }
  expr_ = e;
}

TestFunction TestFunction::interval(double center, double half_width, bool normalize) {
  return TestFunction(Vector::Constant(1, center), Vector::Constant(1, half_width), normalize);
}

Box TestFunction::support() const { return Box(center_ - half_width_, center_ + half_width_); }

double TestFunction::operator()(const Vector& x) const {
  double v = scale_;
  for (Eigen::Index i = 0; i < center_.size() && v != 0.0; ++i) v *= bump1((x(i) - center_(i)) / half_width_(i));
  return v;
}

std::string TestFunction::label() const {
  std::ostringstream out;
  out << "bump(c=";
  for (Eigen::Index i = 0; i < center_.size(); ++i) out << (i ? "," : "") << center_(i);
  out << ";w=";
  for (Eigen::Index i = 0; i < half_width_.size(); ++i) out << (i ? "," : "") << half_width_(i);
  out << ")";
  return out.str();
}

std::vector<TestFunction> bump_row(const Box& domain, int count, double half_width, bool normalize) {
  if (count < 1) throw InvalidArgument("bump_row needs at least one bump");
  const Box inner = domain.shrunk(half_width);
  if (inner.empty()) throw InvalidArgument("bumps do not fit into the domain");
  std::vector<TestFunction> out;
  for (int k = 0; k < count; ++k) {
    const double t = (k + 0.5) / count;
    const Vector c = inner.lo() + t * inner.extent();
    out.emplace_back(c, Vector::Constant(domain.dim(), half_width), normalize);
  }
  return out;
}

TestFamily TestFamily::monomials(int degree) {
  if (degree < 1) throw InvalidArgument("monomial family needs degree >= 1");
  TestFamily F{"monomials(d<=" + std::to_string(degree) + ")", 1, {}, {}};
  const Expr y = Expr::variable("y1");
  for (int k = 1; k <= degree; ++k) {
    F.functions.push_back(k == 1 ? y : pow(y, Expr(static_cast<double>(k))));
    F.labels.push_back(k == 1 ? "y" : "y^" + std::to_string(k));
  }
  return F;
}

TestFamily TestFamily::trig(int max_k) {
  if (max_k < 1) throw InvalidArgument("trig family needs k >= 1");
  TestFamily F{"trig(k<=" + std::to_string(max_k) + ")", 2, {}, {}};
  const Expr y1 = Expr::variable("y1"), y2 = Expr::variable("y2");
  // (y1 + i y2)^k = cos(k theta) + i sin(k theta) on the circle
  Expr c = y1, s = y2;
  for (int k = 1; k <= max_k; ++k) {
    if (k > 1) {
      const Expr cn = y1 * c - y2 * s;
      s = y2 * c + y1 * s;
      c = cn;
    }
    F.functions.push_back(c);
    F.labels.push_back("cos(" + std::to_string(k) + "theta)");
    F.functions.push_back(s);
    F.labels.push_back("sin(" + std::to_string(k) + "theta)");
  }
  return F;
}

TestFamily TestFamily::coordinates(int s) {
  TestFamily F{"coordinates", s, {}, {}};
  for (const auto& v : ambient_variables(s)) {
    F.functions.push_back(Expr::variable(v));
    F.labels.push_back(v);
  }
  return F;
}

TestFamily TestFamily::custom(int s, const std::vector<std::string>& sources) {
  TestFamily F{"custom", s, {}, {}};
  ParseOptions po;
  po.variables = ambient_variables(s);
  for (const auto& src : sources) {
    F.functions.push_back(parse(src, po));
    F.labels.push_back(src);
  }
  return F;
}

std::string to_string(PairingStatus s) {
  switch (s) {
    case PairingStatus::Converged: return "converged";
    case PairingStatus::ConvergedUnordered: return "converged_unordered";
    case PairingStatus::Divergent: return "divergent";
    case PairingStatus::UnderResolved: return "under_resolved";
  }
  return "?";
}

PairingOptions tolerance_profile(const std::string& name) {
  PairingOptions o;
  if (name == "strict") {
    o.refine_tol *= 1e-2;
    o.abs_tol *= 1e-2;
    o.zero_tol *= 1e-2;
  } else if (name != "default") {
    throw InvalidArgument("unknown tolerance profile '" + name + "'");
  }
  return o;
}

std::vector<Pairing> pair_family(const EpsNet& net, const std::vector<Expr>& fs, const TestFunction& phi,
                                 double eps, const PairingOptions& opts) {
  if (phi.center().size() != net.dim()) throw InvalidArgument("test function and net differ in dimension");
  if (!net.domain().contains(phi.support(), 1e-12)) throw InvalidArgument("test function support leaves the domain");
  const auto progs = compile_family(fs, net.target_dim());
  const Box supp = phi.support();
  long n = initial_nodes(supp.extent().maxCoeff(), effective_scale(net, opts), eps, opts);

  auto too_big = [&](long per_axis) {
    if (per_axis > opts.max_nodes_per_axis) return true;
    double total = 1.0;
    for (int i = 0; i < net.dim(); ++i) total *= static_cast<double>(per_axis);
    return total > static_cast<double>(opts.max_total_nodes);
  };

  std::vector<Pairing> out(fs.size());
  if (too_big(n)) {
    for (auto& p : out) p.under_resolved = true;
    return out;
  }
  // refine by doubling until two successive rules agree relative to the
  // integral of |f(u) phi|
  Sums prev = quadrature_sums(net, progs, phi, eps, n);
  bool resolved = false;
  while (!too_big(2 * n)) {
    n *= 2;
    Sums next = quadrature_sums(net, progs, phi, eps, n);
    double gap = 0.0, size = std::abs(phi.integral());
    for (std::size_t k = 0; k < fs.size(); ++k) {
      gap = std::max(gap, std::abs(next.value[k] - prev.value[k]));
      size = std::max(size, next.mass[k]);
    }
    prev = std::move(next);
    if (gap <= opts.refine_tol * std::max(1.0, size)) {
      resolved = true;
      break;
    }
  }
  for (std::size_t k = 0; k < fs.size(); ++k) out[k] = Pairing{prev.value[k], n, !resolved};
  return out;
}

Pairing pair(const EpsNet& net, const Expr& f, const TestFunction& phi, double eps, const PairingOptions& opts) {
  return pair_family(net, {f}, phi, eps, opts).front();
}

PairingSeries analyze_series(const Vector& eps, const Vector& values, std::vector<bool> under_resolved,
                             const PairingOptions& opts) {
  PairingSeries s;
  s.eps = eps;
  s.values = values;
  s.under_resolved = std::move(under_resolved);
  const auto J = values.size();
  if (J < 3) throw InvalidArgument("pairing series needs at least three points");
  const auto T = std::min<Eigen::Index>(std::max(opts.tail, 3), J);
  const auto first = J - T;
  s.limit = values(J - 1);

  for (auto j = first; j < J; ++j)
    if (s.under_resolved[static_cast<std::size_t>(j)] || !std::isfinite(values(j))) {
      s.status = std::isfinite(values(j)) ? PairingStatus::UnderResolved : PairingStatus::Divergent;
      s.error = std::numeric_limits<double>::infinity();
      return s;
    }

  // successive steps d_j = |P_j - P_{j-1}| over the tail
  std::vector<double> d, le;
  for (auto j = first + 1; j < J; ++j) {
    d.push_back(std::abs(values(j) - values(j - 1)));
    le.push_back(std::log10(eps(j)));
  }
  const double tol = opts.abs_tol * std::max(1.0, std::abs(values(J - 1)));
  const double last = std::max(d[d.size() - 1], d[d.size() - 2]);
  if (last <= tol) {
    s.status = PairingStatus::Converged;
    s.error = last;
    return s;
  }

  // algebraic decay of the steps: Richardson on the geometric grid. Every
  // trailing window of at least three steps is fitted and the straightest
  // one wins, so a pre-asymptotic start does not bias the rate.
  double best_rms = std::numeric_limits<double>::infinity(), best_p = 0.0;
  for (std::size_t start = 0; start + 3 <= d.size(); ++start) {
    std::vector<double> lx, ly;
    for (std::size_t k = start; k < d.size(); ++k)
      if (d[k] > 0.0) {
        lx.push_back(le[k]);
        ly.push_back(std::log10(d[k]));
      }
    if (lx.size() < 3) continue;
    const auto n = static_cast<Eigen::Index>(lx.size());
    Matrix A(n, 2);
    Vector b(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      A(k, 0) = lx[static_cast<std::size_t>(k)];
      A(k, 1) = 1.0;
      b(k) = ly[static_cast<std::size_t>(k)];
    }
    const Vector c = A.colPivHouseholderQr().solve(b);
    const double rms = std::sqrt((A * c - b).squaredNorm() / static_cast<double>(n));
    if (c(0) >= 0.25 && rms < best_rms - 1e-3) {
      best_rms = rms;
      best_p = c(0);
    }
  }
  if (best_rms <= 0.25) {
    const double r = eps(J - 1) / eps(J - 2);
    const double rp = std::pow(r, best_p);
    s.limit = values(J - 1) + (values(J - 1) - values(J - 2)) * rp / (1.0 - rp);
    s.error = std::abs(s.limit - values(J - 1));
    s.rate = best_p;
    s.status = PairingStatus::Converged;
    return s;
  }

  // steps shrink without a clean rate
  const std::size_t h = d.size() / 2;
  double early = 0.0, late = 0.0;
  for (std::size_t k = 0; k < d.size(); ++k) (k < h ? early : late) = std::max(k < h ? early : late, d[k]);
  s.error = last;
  s.status = late * 3.0 <= early ? PairingStatus::ConvergedUnordered : PairingStatus::Divergent;
  return s;
}

std::vector<PairingSeries> pairing_series(const EpsNet& net, const std::vector<Expr>& fs, const TestFunction& phi,
                                          const PairingOptions& opts) {
  const Vector eps = opts.grid.values();
  std::vector<Vector> vals(fs.size(), Vector(eps.size()));
  std::vector<std::vector<bool>> flags(fs.size(), std::vector<bool>(static_cast<std::size_t>(eps.size())));
  for (Eigen::Index j = 0; j < eps.size(); ++j) {
    const auto p = pair_family(net, fs, phi, eps(j), opts);
    for (std::size_t k = 0; k < fs.size(); ++k) {
      vals[k](j) = p[k].value;
      flags[k][static_cast<std::size_t>(j)] = p[k].under_resolved;
    }
  }
  std::vector<PairingSeries> out;
  for (std::size_t k = 0; k < fs.size(); ++k) out.push_back(analyze_series(eps, vals[k], flags[k], opts));
  return out;
}

nlohmann::json to_json(const PairingSeries& s) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index j = 0; j < s.eps.size(); ++j)
    rows.push_back({{"eps", s.eps(j)}, {"pairing", s.values(j)},
                    {"under_resolved", static_cast<bool>(s.under_resolved[static_cast<std::size_t>(j)])}});
  nlohmann::json j{{"status", to_string(s.status)}, {"limit", s.limit}, {"rate", s.rate}, {"series", rows}};
  j["error"] = std::isfinite(s.error) ? nlohmann::json(s.error) : nlohmann::json(nullptr);
  return j;
}

BoundCheck check_c_bounded(const EpsNet& net, const Box& K, const EpsGrid& grid, int samples) {
  const Matrix X = K.grid(samples);
  const Vector eps = grid.values();
  Vector sup(eps.size());
  parallel_for(static_cast<std::size_t>(eps.size()), [&](std::size_t j) {
    double m = 0.0;
    for (Eigen::Index c = 0; c < X.cols(); ++c) {
      const double v = net(X.col(c), eps(static_cast<Eigen::Index>(j))).norm();
      m = std::isfinite(v) ? std::max(m, v) : std::numeric_limits<double>::infinity();
    }
    sup(static_cast<Eigen::Index>(j)) = m;
  });
  const auto h = eps.size() / 2;
  BoundCheck b;
  b.early = sup.head(h).maxCoeff();
  b.late = sup.tail(eps.size() - h).maxCoeff();
  b.bounded = std::isfinite(b.late) && b.late <= 2.0 * b.early + 1e-12;
  return b;
}

MembershipReport membership_test_A(const EpsNet& net, const TestFamily& F, const std::vector<TestFunction>& phis,
                                   const PairingOptions& opts) {
  if (F.ambient_dim != net.target_dim()) throw InvalidArgument("test family and net differ in target dimension");
  MembershipReport r;
  r.family = F.name;
  r.bound = check_c_bounded(net, net.domain(), opts.grid);
  if (!r.bound.bounded) return r;
  bool all = true, divergent = false, unresolved = false;
  for (const auto& phi : phis) {
    const auto series = pairing_series(net, F.functions, phi, opts);
    for (std::size_t k = 0; k < series.size(); ++k) {
      all = all && series[k].converged();
      divergent = divergent || series[k].status == PairingStatus::Divergent;
      unresolved = unresolved || series[k].status == PairingStatus::UnderResolved;
      r.entries.push_back({F.labels[k], phi.label(), series[k]});
    }
  }
  r.member = all;
  r.inconclusive = unresolved && !divergent;
  return r;
}

nlohmann::json to_json(const MembershipReport& r) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : r.entries) entries.push_back({{"f", e.f}, {"phi", e.phi}, {"series", to_json(e.series)}});
  return {{"family", r.family},
          {"c_bounded", r.bound.bounded},
          {"member", r.member},
          {"inconclusive", r.inconclusive},
          {"entries", entries}};
}

AssocVerdict model_assoc_test(const EpsNet& u, const EpsNet& v, const TestFamily& F,
                              const std::vector<TestFunction>& phis, const PairingOptions& opts) {
  if (u.dim() != v.dim() || u.target_dim() != v.target_dim()) throw InvalidArgument("nets differ in shape");
  if (F.ambient_dim != u.target_dim()) throw InvalidArgument("test family and nets differ in target dimension");
  AssocVerdict out;
  out.family = F.name;
  const Vector eps = opts.grid.values();
  bool all = true, divergent = false, unresolved = false;
  for (const auto& phi : phis) {
    std::vector<Vector> diff(F.functions.size(), Vector(eps.size()));
    std::vector<std::vector<bool>> flags(F.functions.size(), std::vector<bool>(static_cast<std::size_t>(eps.size())));
    for (Eigen::Index j = 0; j < eps.size(); ++j) {
      const auto pu = pair_family(u, F.functions, phi, eps(j), opts);
      const auto pv = pair_family(v, F.functions, phi, eps(j), opts);
      for (std::size_t k = 0; k < F.functions.size(); ++k) {
        diff[k](j) = pu[k].value - pv[k].value;
        flags[k][static_cast<std::size_t>(j)] = pu[k].under_resolved || pv[k].under_resolved;
      }
    }
    for (std::size_t k = 0; k < F.functions.size(); ++k) {
      PairingSeries s = analyze_series(eps, diff[k], flags[k], opts);
      const bool ok = s.converged() && std::abs(s.limit) <= opts.zero_tol;
      divergent = divergent || (!ok && s.status != PairingStatus::UnderResolved);
      unresolved = unresolved || s.status == PairingStatus::UnderResolved;
      if (!ok && all) out.witness = out.entries.size();
      all = all && ok;
      out.entries.push_back({F.labels[k], phi.label(), std::move(s)});
    }
  }
  out.associated = all;
  out.inconclusive = unresolved && !divergent;
  return out;
}

nlohmann::json to_json(const AssocVerdict& v) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : v.entries) entries.push_back({{"f", e.f}, {"phi", e.phi}, {"series", to_json(e.series)}});
  nlohmann::json j{{"family", v.family}, {"associated", v.associated}, {"inconclusive", v.inconclusive},
                   {"entries", entries}};
  if (v.witness) j["witness"] = {{"f", v.entries[*v.witness].f}, {"phi", v.entries[*v.witness].phi}};
  return j;
}

double YoungMeasureEstimate::expectation(const std::function<double(double)>& f) const {
  double s = 0.0;
  for (Eigen::Index k = 0; k < mass.size(); ++k) s += f(0.5 * (edges(k) + edges(k + 1))) * mass(k);
  return s / phi_integral;
}

namespace {

struct Histogram {
  Vector mass;
  double total = 0.0, outside = 0.0;
};

Histogram histogram(const EpsNet& net, const Box& window, const std::optional<Program>& phi, double eps, int bins,
                    const YoungOptions& opts, long n) {
  const bool angle = opts.coordinate == YoungCoordinate::Angle;
  const double lo = angle ? 0.0 : opts.lo, hi = angle ? 2.0 * std::numbers::pi : opts.hi;
  const TensorRule rule(window, n);
  const std::size_t chunks = 256;
  const long per = (rule.total + static_cast<long>(chunks) - 1) / static_cast<long>(chunks);
  std::vector<Histogram> part(chunks, Histogram{Vector::Zero(bins)});
  const int m = net.dim();
  parallel_for(chunks, [&](std::size_t c) {
    const long begin = static_cast<long>(c) * per, end = std::min(rule.total, begin + per);
    Histogram& h = part[c];
    std::vector<double> args(static_cast<std::size_t>(m) + 1, eps);
    rule.visit(begin, end, [&](const Vector& x, double w) {
      double pw = w;
      if (phi) {
        for (int i = 0; i < m; ++i) args[static_cast<std::size_t>(i)] = x(i);
        pw *= (*phi)(args);
      }
      if (pw == 0.0) return;
      const Vector y = net(x, eps);
      double t;
      if (angle) {
        t = std::atan2(y(1), y(0));
        if (t < 0) t += 2.0 * std::numbers::pi;
      } else {
        t = y(opts.component);
      }
      h.total += pw;
      const double k = std::floor((t - lo) / (hi - lo) * bins);
      if (t == hi && !angle) {
        h.mass(bins - 1) += pw;
      } else if (k >= 0 && k < bins) {
        h.mass(static_cast<Eigen::Index>(k)) += pw;
      } else {
        h.outside += pw;
      }
    });
  });
  Histogram out{Vector::Zero(bins)};
  for (const auto& h : part) {
    out.mass += h.mass;
    out.total += h.total;
    out.outside += h.outside;
  }
  return out;
}

}  // namespace

YoungMeasureEstimate young_estimate(const EpsNet& net, const Box& window, const std::optional<Expr>& phi,
                                    double eps, int bins, const YoungOptions& opts) {
  if (bins < 1) throw InvalidArgument("young_estimate needs at least one bin");
  if (!net.domain().contains(window, 1e-12)) throw InvalidArgument("window leaves the net domain");
  if (opts.coordinate == YoungCoordinate::Angle && net.target_dim() != 2)
    throw InvalidArgument("angle coordinate needs a planar target");
  if (opts.coordinate == YoungCoordinate::Component &&
      (opts.component < 0 || opts.component >= net.target_dim() || !(opts.hi > opts.lo)))
    throw InvalidArgument("bad component or bin range");
  std::optional<Program> prog;
  if (phi) prog.emplace(*phi, net_variables(net.dim()));

  // a histogram needs many samples per oscillation, not just quadrature accuracy
  PairingOptions po = opts.pairing;
  po.nodes_per_wavelength = std::max(po.nodes_per_wavelength, 8 * bins);
  long n = initial_nodes(window.extent().maxCoeff(), effective_scale(net, po), eps, po);
  YoungMeasureEstimate y;
  y.window = window;
  const bool angle = opts.coordinate == YoungCoordinate::Angle;
  const double lo = angle ? 0.0 : opts.lo, hi = angle ? 2.0 * std::numbers::pi : opts.hi;
  y.edges = Vector::LinSpaced(bins + 1, lo, hi);

  n = std::min(n, po.max_nodes_per_axis);
  Histogram h = histogram(net, window, prog, eps, bins, opts, n);
  if (!effective_scale(net, po)) {
    // no declared scale: accept the histogram only if doubling barely moves it
    const long n2 = std::min(2 * n, po.max_nodes_per_axis);
    const Histogram h2 = histogram(net, window, prog, eps, bins, opts, n2);
    y.under_resolved = n2 == n || (h2.mass - h.mass).lpNorm<1>() > 1e-3 * std::abs(h2.total);
    h = h2;
    n = n2;
  }
  y.nodes = n;
  y.mass = h.mass;
  y.outside = h.outside;
  y.phi_integral = h.total;
  y.density = h.mass / ((hi - lo) / bins) / h.total;
  return y;
}

nlohmann::json to_json(const YoungMeasureEstimate& y) {
  return {{"edges", std::vector<double>(y.edges.data(), y.edges.data() + y.edges.size())},
          {"density", std::vector<double>(y.density.data(), y.density.data() + y.density.size())},
          {"phi_integral", y.phi_integral},
          {"outside", y.outside},
          {"nodes", y.nodes},
          {"under_resolved", y.under_resolved}};
}

SampledFunctional limit_functional(const EpsNet& net, const Expr& f, const Box& K, int n, double half_width,
                                   const PairingOptions& opts) {
  if (!net.domain().contains(K.shrunk(-half_width), 1e-12))
    throw InvalidArgument("bumps around K leave the net domain");
  SampledFunctional out;
  const Matrix C = K.grid(n);
  out.values.resize(C.cols());
  for (Eigen::Index c = 0; c < C.cols(); ++c) {
    const TestFunction phi(C.col(c), Vector::Constant(K.dim(), half_width));
    const PairingSeries s = pairing_series(net, {f}, phi, opts).front();
    out.centers.push_back(C.col(c));
    out.values(c) = s.limit;
    out.status.push_back(s.status);
  }

  // bounding box of the images over the grid, then sup |f| on it
  const int s = net.target_dim();
  Vector lo = Vector::Constant(s, std::numeric_limits<double>::infinity()), hi = -lo;
  const Matrix X = net.domain().grid(65);
  for (double e : opts.grid.values())
    for (Eigen::Index c = 0; c < X.cols(); ++c) {
      const Vector y = net(X.col(c), e);
      lo = lo.cwiseMin(y);
      hi = hi.cwiseMax(y);
    }
  const Program fp(f, ambient_variables(s));
  const Matrix Y = Box(lo, hi).grid(s == 1 ? 1025 : (s == 2 ? 129 : 17));
  for (Eigen::Index c = 0; c < Y.cols(); ++c) {
    const std::span<const double> args(Y.col(c).data(), static_cast<std::size_t>(s));
    out.sup_f_on_image = std::max(out.sup_f_on_image, std::abs(fp(args)));
  }
  out.within_bound = out.values.size() == 0 || out.values.cwiseAbs().maxCoeff() <= out.sup_f_on_image + 1e-6;
  return out;
}

nlohmann::json to_json(const SampledFunctional& s) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t k = 0; k < s.centers.size(); ++k) {
    const Vector& c = s.centers[k];
    rows.push_back({{"center", std::vector<double>(c.data(), c.data() + c.size())},
                    {"value", s.values(static_cast<Eigen::Index>(k))},
                    {"status", to_string(s.status[k])}});
  }
  return {{"samples", rows}, {"sup_f_on_image", s.sup_f_on_image}, {"within_bound", s.within_bound}};
}

}  // namespace cgf
