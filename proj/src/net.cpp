#include "cgf/net.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <sstream>

namespace cgf {

Vector NetSource::partial(const Vector& x, double eps, const MultiIndex& alpha) const {
  return finite_difference_partial(*this, x, eps, alpha);
}

namespace {

double fd_step(int total_order) {
  switch (total_order) {
    case 1: return 6e-6;
    case 2: return 1e-4;
    case 3: return 1e-3;
    default: return 4e-3;
  }
}

Vector fd_recursive(const NetSource& src, const Vector& x, double eps, MultiIndex alpha, double h) {
  const auto it = std::find_if(alpha.begin(), alpha.end(), [](int a) { return a > 0; });
  if (it == alpha.end()) return src.value(x, eps);
  const auto axis = static_cast<Eigen::Index>(it - alpha.begin());
  --*it;
  const double step = h * std::max(1.0, std::abs(x(axis)));
  Vector xp = x, xm = x;
  xp(axis) += step;
  xm(axis) -= step;
  return (fd_recursive(src, xp, eps, alpha, h) - fd_recursive(src, xm, eps, alpha, h)) / (2 * step);
}

std::string describe_point(const Vector& x, double eps) {
  std::ostringstream out;
  out << "x=(";
  for (Eigen::Index i = 0; i < x.size(); ++i) out << (i ? "," : "") << x(i);
  out << "), eps=" << eps;
  return out.str();
}

class ExprSource final : public NetSource {
 public:
  ExprSource(int m, std::vector<Expr> comps) : m_(m), exprs_(std::move(comps)), slots_(net_variables(m)) {
    for (const auto& e : exprs_) programs_.emplace_back(e, slots_);
  }

  int target_dim() const override { return static_cast<int>(exprs_.size()); }
  const std::vector<Expr>* expressions() const override { return &exprs_; }

  Vector value(const Vector& x, double eps) const override { return run(programs_, exprs_, x, eps); }

  Vector partial(const Vector& x, double eps, const MultiIndex& alpha) const override {
    const auto& entry = derivative(alpha);
    return run(entry.programs, entry.exprs, x, eps);
  }

 private:
  struct Derived {
    std::vector<Expr> exprs;
    std::vector<Program> programs;
  };

  const Derived& derivative(const MultiIndex& alpha) const {
    std::lock_guard lock(mutex_);
    auto it = cache_.find(alpha);
    if (it != cache_.end()) return it->second;
    Derived d;
    for (const auto& e : exprs_) {
      Expr de = e;
      for (int i = 0; i < m_; ++i)
        for (int k = 0; k < alpha[i]; ++k) de = differentiate(de, slots_[i]);
      d.programs.emplace_back(de, slots_);
      d.exprs.push_back(std::move(de));
    }
    return cache_.emplace(alpha, std::move(d)).first->second;
  }

  Vector run(const std::vector<Program>& progs, const std::vector<Expr>& exprs, const Vector& x,
             double eps) const {
    double args[16];
    std::vector<double> big;
    double* a = args;
    if (m_ + 1 > 16) {
      big.resize(m_ + 1);
      a = big.data();
    }
    for (int i = 0; i < m_; ++i) a[i] = x(i);
    a[m_] = eps;
    Vector out(progs.size());
    for (std::size_t c = 0; c < progs.size(); ++c) {
      out(c) = progs[c](std::span<const double>(a, m_ + 1));
      if (std::isnan(out(c))) {
        Bindings b;
        for (int i = 0; i <= m_; ++i) b[slots_[i]] = a[i];
        try {
          evaluate(exprs[c], b);
        } catch (const DomainFault& f) {
          throw DomainFault(std::string(f.what()) + " at " + describe_point(x, eps), f.subtree());
        }
      }
    }
    return out;
  }

  int m_;
  std::vector<Expr> exprs_;
  std::vector<std::string> slots_;
  std::vector<Program> programs_;
  mutable std::mutex mutex_;
  mutable std::map<MultiIndex, Derived> cache_;
};

class FunctionSource final : public NetSource {
 public:
  FunctionSource(int s, std::function<Vector(const Vector&, double)> fn) : s_(s), fn_(std::move(fn)) {}
  int target_dim() const override { return s_; }
  Vector value(const Vector& x, double eps) const override { return fn_(x, eps); }

 private:
  int s_;
  std::function<Vector(const Vector&, double)> fn_;
};

class LinearSource final : public NetSource {
 public:
  LinearSource(std::shared_ptr<const NetSource> u, std::shared_ptr<const NetSource> v, double cu,
               double cv)
      : u_(std::move(u)), v_(std::move(v)), cu_(cu), cv_(cv) {}
  int target_dim() const override { return u_->target_dim(); }
  Vector value(const Vector& x, double eps) const override {
    Vector r = cu_ * u_->value(x, eps);
    if (v_) r += cv_ * v_->value(x, eps);
    return r;
  }
  Vector partial(const Vector& x, double eps, const MultiIndex& alpha) const override {
    Vector r = cu_ * u_->partial(x, eps, alpha);
    if (v_) r += cv_ * v_->partial(x, eps, alpha);
    return r;
  }

 private:
  std::shared_ptr<const NetSource> u_, v_;
  double cu_, cv_;
};

class ComposeSource final : public NetSource {
 public:
  ComposeSource(std::vector<Expr> outer, std::shared_ptr<const NetSource> inner)
      : outer_(std::move(outer)), inner_(std::move(inner)) {
    const auto slots = ambient_variables(inner_->target_dim());
    for (const auto& f : outer_) {
      programs_.emplace_back(f, slots);
      std::vector<Program> grad;
      for (const auto& y : slots) grad.emplace_back(differentiate(f, y), slots);
      gradients_.push_back(std::move(grad));
    }
  }
  int target_dim() const override { return static_cast<int>(outer_.size()); }
  Vector value(const Vector& x, double eps) const override {
    const Vector y = inner_->value(x, eps);
    Vector out(outer_.size());
    for (std::size_t c = 0; c < outer_.size(); ++c)
      out(c) = programs_[c](std::span<const double>(y.data(), y.size()));
    return out;
  }
  Vector partial(const Vector& x, double eps, const MultiIndex& alpha) const override {
    int total = 0;
    for (int a : alpha) total += a;
    if (total != 1) return finite_difference_partial(*this, x, eps, alpha);
    const Vector y = inner_->value(x, eps);
    const Vector dy = inner_->partial(x, eps, alpha);
    Vector out(outer_.size());
    for (std::size_t c = 0; c < outer_.size(); ++c) {
      double acc = 0.0;
      for (Eigen::Index j = 0; j < y.size(); ++j)
        acc += gradients_[c][j](std::span<const double>(y.data(), y.size())) * dy(j);
      out(c) = acc;
    }
    return out;
  }

 private:
  std::vector<Expr> outer_;
  std::shared_ptr<const NetSource> inner_;
  std::vector<Program> programs_;
  std::vector<std::vector<Program>> gradients_;
};

class ConcatSource final : public NetSource {
 public:
  explicit ConcatSource(std::vector<std::shared_ptr<const NetSource>> parts) : parts_(std::move(parts)) {
    for (const auto& p : parts_) s_ += p->target_dim();
  }
  int target_dim() const override { return s_; }
  Vector value(const Vector& x, double eps) const override {
    Vector out(s_);
    int off = 0;
    for (const auto& p : parts_) {
      const Vector v = p->value(x, eps);
      out.segment(off, v.size()) = v;
      off += static_cast<int>(v.size());
    }
    return out;
  }
  Vector partial(const Vector& x, double eps, const MultiIndex& alpha) const override {
    Vector out(s_);
    int off = 0;
    for (const auto& p : parts_) {
      const Vector v = p->partial(x, eps, alpha);
      out.segment(off, v.size()) = v;
      off += static_cast<int>(v.size());
    }
    return out;
  }

 private:
  std::vector<std::shared_ptr<const NetSource>> parts_;
  int s_ = 0;
};

}  // namespace

Vector finite_difference_partial(const NetSource& src, const Vector& x, double eps,
                                 const MultiIndex& alpha) {
  int total = 0;
  for (int a : alpha) total += a;
  return fd_recursive(src, x, eps, alpha, fd_step(total));
}

EpsNet::EpsNet(Box domain, std::shared_ptr<const NetSource> source)
    : domain_(std::move(domain)), source_(std::move(source)) {
  if (!source_) throw InvalidArgument("net source must not be null");
}

EpsNet EpsNet::from_exprs(Box domain, std::vector<Expr> components) {
  if (components.empty()) throw InvalidArgument("net needs at least one component");
  const int m = domain.dim();
  const auto vars = net_variables(m);
  for (const auto& c : components) {
    if (!is_smooth(c)) throw InvalidArgument("net components must be smooth: " + to_string(c));
    for (const auto& v : free_variables(c))
      if (std::find(vars.begin(), vars.end(), v) == vars.end())
        throw InvalidArgument("net component uses undeclared variable '" + v + "'");
  }
  return EpsNet(std::move(domain), std::make_shared<ExprSource>(m, std::move(components)));
}

EpsNet EpsNet::parse(Box domain, const std::vector<std::string>& components) {
  ParseOptions opts;
  opts.variables = net_variables(domain.dim());
  std::vector<Expr> exprs;
  for (const auto& c : components) exprs.push_back(cgf::parse(c, opts));
  return from_exprs(std::move(domain), std::move(exprs));
}

EpsNet EpsNet::from_function(Box domain, int target_dim,
                             std::function<Vector(const Vector&, double)> fn) {
  return EpsNet(std::move(domain), std::make_shared<FunctionSource>(target_dim, std::move(fn)));
}

Vector EpsNet::partial(const Vector& x, double eps, const MultiIndex& alpha) const {
  if (static_cast<int>(alpha.size()) != dim()) throw InvalidArgument("multi-index has wrong length");
  if (std::all_of(alpha.begin(), alpha.end(), [](int a) { return a == 0; })) return (*this)(x, eps);
  return source_->partial(x, eps, alpha);
}

const std::vector<Expr>& EpsNet::expressions() const {
  const auto* e = source_->expressions();
  if (!e) throw InvalidArgument("net is not symbolic");
  return *e;
}

EpsNet EpsNet::restricted(const Box& box) const {
  if (box.dim() != dim()) throw InvalidArgument("restriction box has wrong dimension");
  EpsNet r = *this;
  r.domain_ = box;
  return r;
}

EpsNet EpsNet::with_scale_hint(Expr scale) const {
  EpsNet r = *this;
  r.scale_hint_ = std::move(scale);
  return r;
}

EpsNet operator-(const EpsNet& u, const EpsNet& v) {
  if (u.dim() != v.dim() || u.target_dim() != v.target_dim())
    throw InvalidArgument("nets differ in domain or target dimension");
  if (u.symbolic() && v.symbolic()) {
    std::vector<Expr> d;
    for (int c = 0; c < u.target_dim(); ++c) d.push_back(u.expressions()[c] - v.expressions()[c]);
    return EpsNet::from_exprs(u.domain(), std::move(d));
  }
  return EpsNet(u.domain(), std::make_shared<LinearSource>(u.source(), v.source(), 1.0, -1.0));
}

EpsNet operator*(double c, const EpsNet& u) {
  if (u.symbolic()) {
    std::vector<Expr> d;
    for (const auto& e : u.expressions()) d.push_back(Expr(c) * e);
    return EpsNet::from_exprs(u.domain(), std::move(d));
  }
  return EpsNet(u.domain(), std::make_shared<LinearSource>(u.source(), nullptr, c, 0.0));
}

EpsNet compose(const std::vector<Expr>& outer, const EpsNet& inner) {
  if (inner.symbolic()) {
    std::vector<Expr> out;
    for (const auto& f : outer) {
      Expr g = f;
      for (int j = 0; j < inner.target_dim(); ++j)
        g = substitute(g, "y" + std::to_string(j + 1), inner.expressions()[j]);
      out.push_back(std::move(g));
    }
    return EpsNet::from_exprs(inner.domain(), std::move(out));
  }
  return EpsNet(inner.domain(), std::make_shared<ComposeSource>(outer, inner.source()));
}

EpsNet concat(const std::vector<EpsNet>& parts) {
  if (parts.empty()) throw InvalidArgument("concat needs at least one net");
  bool all_symbolic = true;
  for (const auto& p : parts) all_symbolic = all_symbolic && p.symbolic();
  if (all_symbolic) {
    std::vector<Expr> out;
    for (const auto& p : parts) out.insert(out.end(), p.expressions().begin(), p.expressions().end());
    return EpsNet::from_exprs(parts.front().domain(), std::move(out));
  }
  std::vector<std::shared_ptr<const NetSource>> srcs;
  for (const auto& p : parts) srcs.push_back(p.source());
  return EpsNet(parts.front().domain(), std::make_shared<ConcatSource>(std::move(srcs)));
}

std::vector<MultiIndex> multi_indices(int m, int order) {
  std::vector<MultiIndex> out;
  MultiIndex cur(m, 0);
  std::function<void(int, int)> rec = [&](int axis, int left) {
    if (axis == m - 1) {
      cur[axis] = left;
      out.push_back(cur);
      return;
    }
    for (int k = left; k >= 0; --k) {
      cur[axis] = k;
      rec(axis + 1, left - k);
    }
  };
  rec(0, order);
  return out;
}

double sup_norm_order(const EpsNet& net, double eps, const Box& K, int order,
                      const SupNormOptions& opts) {
  if (K.dim() != net.dim()) throw InvalidArgument("compact set has wrong dimension");
  const Matrix pts = K.grid(opts.samples);
  const auto alphas = multi_indices(net.dim(), order);
  std::vector<double> norms(pts.cols());
  parallel_for(norms.size(), [&](std::size_t c) {
    const Vector x = pts.col(static_cast<Eigen::Index>(c));
    double acc = 0.0;
    for (const auto& a : alphas) {
      const Vector d = net.partial(x, eps, a);
      if (opts.norm == NormKind::Euclidean)
        acc += d.squaredNorm();
      else
        acc = std::max(acc, d.cwiseAbs().maxCoeff());
    }
    norms[c] = opts.norm == NormKind::Euclidean ? std::sqrt(acc) : acc;
  });
  double best = 0.0;
  for (double n : norms) {
    if (std::isnan(n)) return n;
    best = std::max(best, n);
  }
  return best;
}

double sup_norm(const EpsNet& net, double eps, const Box& K, int k, const SupNormOptions& opts) {
  double best = 0.0;
  for (int j = 0; j <= k; ++j) best = std::max(best, sup_norm_order(net, eps, K, j, opts));
  return best;
}

}  // namespace cgf
