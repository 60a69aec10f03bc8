#include "cgf/mollify.hpp"

#include "cgf/quadrature.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>

namespace cgf {

namespace {

double bump(double s) { return s < 1.0 ? std::exp(-1.0 / (1.0 - s)) : 0.0; }

// J_n = int_0^1 t^n exp(-1/(1-t^2)) dt
double radial_moment(int n) {
  return integrate<double>([n](double t) { return std::pow(t, n) * bump(t * t); }, 0.0, 1.0, 32, 20);
}

// Surface area of the unit sphere in R^m.
double sphere_area(int m) { return 2.0 * std::pow(std::numbers::pi, 0.5 * m) / std::tgamma(0.5 * m); }

}  // namespace

double Mollifier::operator()(const Vector& y) const {
  const double s = y.squaredNorm() / (radius * radius);
  if (s >= 1.0) return 0.0;
  double p = 0.0;
  for (Eigen::Index k = coefficients.size() - 1; k >= 0; --k) p = p * s + coefficients(k);
  return p * bump(s);
}

Expr Mollifier::expression() const {
  Expr s(0.0);
  for (const auto& y : ambient_variables(dim)) s = s + pow(Expr::variable(y), Expr(2.0));
  s = s / Expr(radius * radius);
  Expr p(0.0);
  for (Eigen::Index k = coefficients.size() - 1; k >= 0; --k) p = p * s + Expr(coefficients(k));
  return p * flat(Expr(1.0) - s);
}

Mollifier build_mollifier(int dim, int moments, double radius) {
  if (dim < 1) throw InvalidArgument("mollifier dimension must be positive");
  if (moments < 0 || moments > 8) throw InvalidArgument("moment order must lie in 0..8");
  if (!(radius > 0.0)) throw InvalidArgument("mollifier radius must be positive");
  // odd moments vanish by symmetry, so only the even ones constrain p
  const int K = moments / 2;
  Matrix A(K + 1, K + 1);
  Vector b = Vector::Zero(K + 1);
  for (int k = 0; k <= K; ++k) {
    A(0, k) = sphere_area(dim) * std::pow(radius, dim) * radial_moment(dim - 1 + 2 * k);
    for (int j = 1; j <= K; ++j) A(j, k) = radial_moment(2 * j + dim - 1 + 2 * k);
  }
  b(0) = 1.0;
  const Eigen::FullPivLU<Matrix> lu(A);
  if (lu.rank() < K + 1) throw Error("singular moment matrix");
  Mollifier rho;
  rho.dim = dim;
  rho.moments = moments;
  rho.radius = radius;
  rho.coefficients = lu.solve(b);
  if (!rho.coefficients.allFinite()) throw Error("moment system produced non-finite coefficients");
  return rho;
}

nlohmann::json to_json(const Mollifier& rho) {
  return {{"dim", rho.dim},
          {"moments", rho.moments},
          {"radius", rho.radius},
          {"coefficients", std::vector<double>(rho.coefficients.data(),
                                               rho.coefficients.data() + rho.coefficients.size())}};
}

Mollifier mollifier_from_json(const nlohmann::json& j) {
  const int dim = j.at("dim").get<int>();
  const int moments = j.value("moments", 0);
  const double radius = j.value("radius", 1.0);
  if (!j.contains("coefficients")) return build_mollifier(dim, moments, radius);
  const auto c = j.at("coefficients").get<std::vector<double>>();
  Mollifier rho;
  rho.dim = dim;
  rho.moments = moments;
  rho.radius = radius;
  rho.coefficients = Eigen::Map<const Vector>(c.data(), static_cast<Eigen::Index>(c.size()));
  return rho;
}

std::string to_string(Regularity r) {
  switch (r) {
    case Regularity::Smooth: return "smooth";
    case Regularity::Continuous: return "continuous";
    case Regularity::Bounded: return "bounded";
  }
  return "?";
}

Regularity regularity_from_string(const std::string& s) {
  if (s == "smooth") return Regularity::Smooth;
  if (s == "continuous") return Regularity::Continuous;
  if (s == "bounded") return Regularity::Bounded;
  throw InvalidArgument("unknown regularity '" + s + "'");
}

// ---------------------------------------------------------------------------

SampledMap SampledMap::from_grid(Box domain, std::vector<int> shape, int target_dim,
                                 std::vector<double> values, Regularity regularity) {
  if (static_cast<int>(shape.size()) != domain.dim()) throw InvalidArgument("grid shape does not match domain");
  std::size_t n = static_cast<std::size_t>(target_dim);
  for (int k : shape) {
    if (k < 2) throw InvalidArgument("grid needs at least two points per axis");
    n *= static_cast<std::size_t>(k);
  }
  if (values.size() != n) throw InvalidArgument("grid value count does not match shape");
  for (double v : values)
    if (!std::isfinite(v)) throw InvalidArgument("grid values must be finite");
  SampledMap m;
  m.domain_ = std::move(domain);
  m.target_dim_ = target_dim;
  m.regularity_ = regularity;
  m.shape_ = std::move(shape);
  m.values_ = std::move(values);
  return m;
}

SampledMap SampledMap::from_exprs(Box domain, std::vector<Expr> components, Regularity regularity) {
  if (components.empty()) throw InvalidArgument("map needs at least one component");
  SampledMap m;
  m.target_dim_ = static_cast<int>(components.size());
  m.regularity_ = regularity;
  std::vector<std::string> slots;
  for (int i = 1; i <= domain.dim(); ++i) slots.push_back("x" + std::to_string(i));
  for (const auto& e : components) m.programs_.emplace_back(e, slots);
  m.exprs_ = std::move(components);
  m.domain_ = std::move(domain);
  return m;
}

SampledMap SampledMap::parse(Box domain, const std::vector<std::string>& components, Regularity regularity) {
  ParseOptions opts;
  for (int i = 1; i <= domain.dim(); ++i) opts.variables.push_back("x" + std::to_string(i));
  opts.allow_nonsmooth = true;
  std::vector<Expr> exprs;
  for (const auto& c : components) exprs.push_back(cgf::parse(c, opts));
  return from_exprs(std::move(domain), std::move(exprs), regularity);
}

SampledMap SampledMap::tabulate(const SampledMap& source, std::vector<int> shape) {
  const Box& d = source.domain();
  if (static_cast<int>(shape.size()) != d.dim()) throw InvalidArgument("grid shape does not match domain");
  std::size_t count = 1;
  for (int k : shape) count *= static_cast<std::size_t>(k);
  std::vector<double> values(count * source.target_dim());
  for (std::size_t p = 0; p < count; ++p) {
    Vector x(d.dim());
    std::size_t rem = p;
    for (int i = d.dim() - 1; i >= 0; --i) {
      const std::size_t k = rem % shape[i];
      rem /= shape[i];
      x(i) = d.lo()(i) + (d.hi()(i) - d.lo()(i)) * static_cast<double>(k) / (shape[i] - 1);
    }
    const Vector v = source(x);
    for (int c = 0; c < source.target_dim(); ++c) values[p * source.target_dim() + c] = v(c);
  }
  return from_grid(d, std::move(shape), source.target_dim(), std::move(values), source.regularity());
}

double SampledMap::spacing() const {
  if (analytic()) return 0.0;
  double h = std::numeric_limits<double>::infinity();
  for (int i = 0; i < dim(); ++i) h = std::min(h, (domain_.hi()(i) - domain_.lo()(i)) / (shape_[i] - 1));
  return h;
}

Vector SampledMap::operator()(const Vector& x) const {
  const Vector xc = domain_.clamp(x);
  const int m = dim();
  Vector out(target_dim_);
  if (analytic()) {
    for (int c = 0; c < target_dim_; ++c) {
      out(c) = programs_[c](std::span<const double>(xc.data(), m));
      if (std::isnan(out(c))) {
        Bindings b;
        for (int i = 0; i < m; ++i) b["x" + std::to_string(i + 1)] = xc(i);
        evaluate(exprs_[c], b);
      }
    }
    return out;
  }
  // multilinear interpolation over the 2^m corners of the enclosing cell
  std::vector<int> cell(m);
  std::vector<double> frac(m);
  for (int i = 0; i < m; ++i) {
    const double t = (xc(i) - domain_.lo()(i)) / (domain_.hi()(i) - domain_.lo()(i)) * (shape_[i] - 1);
    int k = static_cast<int>(std::floor(t));
    k = std::clamp(k, 0, shape_[i] - 2);
    cell[i] = k;
    frac[i] = t - k;
  }
  out.setZero();
  for (unsigned corner = 0; corner < (1u << m); ++corner) {
    double w = 1.0;
    std::size_t idx = 0;
    for (int i = 0; i < m; ++i) {
      const int bit = (corner >> i) & 1u;
      w *= bit ? frac[i] : 1.0 - frac[i];
      idx = idx * shape_[i] + static_cast<std::size_t>(cell[i] + bit);
    }
    if (w == 0.0) continue;
    for (int c = 0; c < target_dim_; ++c) out(c) += w * values_[idx * target_dim_ + c];
  }
  return out;
}

nlohmann::json SampledMap::save(const std::filesystem::path& bin_file) const {
  if (analytic()) {
    std::vector<std::string> comps;
    for (const auto& e : exprs_) comps.push_back(to_string(e));
    return {{"domain", nullptr}, {"exprs", comps}, {"regularity", to_string(regularity_)}};
  }
  static_assert(std::endian::native == std::endian::little, "grid files are little-endian");
  std::ofstream out(bin_file, std::ios::binary);
  if (!out) throw Error("cannot write grid file " + bin_file.string());
  out.write(reinterpret_cast<const char*>(values_.data()),
            static_cast<std::streamsize>(values_.size() * sizeof(double)));
  nlohmann::json dom = nlohmann::json::array();
  for (int i = 0; i < dim(); ++i) dom.push_back({domain_.lo()(i), domain_.hi()(i)});
  return {{"domain", dom},
          {"shape", shape_},
          {"components", target_dim_},
          {"file", bin_file.filename().string()},
          {"regularity", to_string(regularity_)}};
}

namespace {
Box box_from_json(const nlohmann::json& j) {
  const auto n = static_cast<Eigen::Index>(j.size());
  Vector lo(n), hi(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    lo(i) = j.at(i).at(0).get<double>();
    hi(i) = j.at(i).at(1).get<double>();
  }
  return Box(lo, hi);
}
}  // namespace

SampledMap SampledMap::load(const nlohmann::json& header, const std::filesystem::path& base) {
  const Box domain = box_from_json(header.at("domain"));
  const Regularity reg = regularity_from_string(header.value("regularity", "continuous"));
  if (header.contains("exprs"))
    return parse(domain, header.at("exprs").get<std::vector<std::string>>(), reg);
  const auto shape = header.at("shape").get<std::vector<int>>();
  const int s = header.value("components", 1);
  std::size_t n = static_cast<std::size_t>(s);
  for (int k : shape) n *= static_cast<std::size_t>(k);
  std::vector<double> values;
  if (header.contains("values")) {
    values = header.at("values").get<std::vector<double>>();
  } else {
    std::filesystem::path file = header.at("file").get<std::string>();
    if (file.is_relative()) file = base / file;
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error("cannot read grid file " + file.string());
    values.resize(n);
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(n * sizeof(double)))
      throw Error("grid file " + file.string() + " is shorter than its shape");
  }
  return from_grid(domain, shape, s, std::move(values), reg);
}

// ---------------------------------------------------------------------------

Convolver::Convolver(Mollifier rho, ConvolutionOptions opts)
    : rho_(std::move(rho)), opts_(opts), rho_expr_(rho_.expression()) {
  if (opts_.max_panels <= 0) opts_.max_panels = rho_.dim == 1 ? 512 : (rho_.dim == 2 ? 48 : 12);
  if (opts_.panels < 1) throw InvalidArgument("panel count must be positive");
}

// The bump has an essential singularity at |y| = R, so a single high-order
// panel converges much faster than a composite low-order rule.
int Convolver::nodes_per_axis(int k) const {
  if (opts_.order > 0) return opts_.order;
  switch (rho_.dim) {
    case 1: return 160 + 32 * k;
    case 2: return 96 + 24 * k;
    default: return 24 + 8 * k;
  }
}

int Convolver::panels_for(const SampledMap& f, double eps) const {
  int panels = opts_.panels;
  const double h = f.spacing();
  if (h > 0.0) {
    // at least one panel per data cell under the support
    const double cells = 2.0 * eps * rho_.radius / h;
    if (cells > panels) panels = static_cast<int>(std::ceil(cells));
  }
  if (panels > opts_.max_panels)
    throw Error("convolution refinement cap hit (" + std::to_string(panels) + " panels per axis at eps=" +
                std::to_string(eps) + ")");
  return panels;
}

const Convolver::Nodes& Convolver::nodes(int panels, const MultiIndex& alpha) const {
  std::lock_guard lock(mutex_);
  const auto key = std::make_pair(panels, alpha);
  if (auto it = cache_.find(key); it != cache_.end()) return *it->second;

  const int m = rho_.dim;
  const double R = rho_.radius;
  int order = 0;
  for (int a : alpha) order += a;
  const int per_panel = std::max(16, (nodes_per_axis(order) + panels - 1) / panels);
  const CompositeRule<double> rule(-R, R, panels, per_panel);
  const auto n1 = rule.nodes.size();
  long total = 1;
  for (int i = 0; i < m; ++i) total *= n1;

  bool any = false;
  for (int a : alpha) any = any || a > 0;
  Program deriv;
  if (any) {
    Expr d = rho_expr_;
    for (int i = 0; i < m; ++i)
      for (int k = 0; k < alpha[i]; ++k) d = differentiate(d, "y" + std::to_string(i + 1));
    deriv = Program(d, ambient_variables(m));
  }

  std::vector<double> pts, wts;
  Vector y(m);
  for (long c = 0; c < total; ++c) {
    long rem = c;
    double w = 1.0;
    for (int i = m - 1; i >= 0; --i) {
      const auto k = rem % n1;
      rem /= n1;
      y(i) = rule.nodes(k);
      w *= rule.weights(k);
    }
    if (y.squaredNorm() >= R * R) continue;
    const double r = any ? deriv(std::span<const double>(y.data(), m)) : rho_(y);
    if (r == 0.0) continue;
    pts.insert(pts.end(), y.data(), y.data() + m);
    wts.push_back(w * r);
  }
  auto nodes = std::make_unique<Nodes>();
  nodes->points = Eigen::Map<Matrix>(pts.data(), m, static_cast<Eigen::Index>(wts.size()));
  nodes->weights = Eigen::Map<Vector>(wts.data(), static_cast<Eigen::Index>(wts.size()));
  return *cache_.emplace(key, std::move(nodes)).first->second;
}

Vector Convolver::convolve(const SampledMap& f, double eps, const Vector& x) const {
  return convolve_derivative(f, eps, x, MultiIndex(rho_.dim, 0));
}

Vector Convolver::convolve_derivative(const SampledMap& f, double eps, const Vector& x,
                                      const MultiIndex& alpha) const {
  if (f.dim() != rho_.dim || x.size() != rho_.dim) throw InvalidArgument("dimension mismatch in convolution");
  if (!(eps > 0.0)) throw InvalidArgument("eps must be positive");
  const Nodes& q = nodes(panels_for(f, eps), alpha);
  Vector acc = Vector::Zero(f.target_dim());
  for (Eigen::Index i = 0; i < q.weights.size(); ++i) acc += q.weights(i) * f(x - eps * q.points.col(i));
  int order = 0;
  for (int a : alpha) order += a;
  if (order > 0) acc /= std::pow(eps, order);
  return acc;
}

Vector convolve(const SampledMap& f, const Mollifier& rho, double eps, const Vector& x,
                const ConvolutionOptions& opts) {
  return Convolver(rho, opts).convolve(f, eps, x);
}

namespace {

class MollifiedSource final : public NetSource {
 public:
  MollifiedSource(SampledMap u, std::shared_ptr<const Convolver> conv)
      : u_(std::move(u)), conv_(std::move(conv)) {}
  int target_dim() const override { return u_.target_dim(); }
  Vector value(const Vector& x, double eps) const override { return conv_->convolve(u_, eps, x); }
  Vector partial(const Vector& x, double eps, const MultiIndex& alpha) const override {
    return conv_->convolve_derivative(u_, eps, x, alpha);
  }

 private:
  SampledMap u_;
  std::shared_ptr<const Convolver> conv_;
};

}  // namespace

EpsNet embed_scalar(const SampledMap& u, std::shared_ptr<const Convolver> convolver) {
  if (convolver->mollifier().dim != u.dim()) throw InvalidArgument("mollifier dimension does not match map");
  return EpsNet(u.domain(), std::make_shared<MollifiedSource>(u, std::move(convolver)));
}

EpsNet embed_scalar(const SampledMap& u, const Mollifier& rho, const ConvolutionOptions& opts) {
  return embed_scalar(u, std::make_shared<Convolver>(rho, opts));
}

}  // namespace cgf
