#pragma once

// Weak limits of nonlinear functions of nets: test-function pairings along
// an EpsGrid, the membership test for A[X,Y], model association, Young
// measure histograms and sampled limit functionals u_f.

#include "cgf/asymptotics.hpp"
#include "cgf/net.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace cgf {

/// phi(x) = scale * prod_i exp(-1 / (1 - t_i^2)), t_i = (x_i - c_i) / w_i.
class TestFunction {
 public:
  /// With normalize set, scale is chosen so that the integral is 1.
  TestFunction(Vector center, Vector half_width, bool normalize = true);

  static TestFunction interval(double center, double half_width, bool normalize = true);

  const Vector& center() const { return center_; }
  const Vector& half_width() const { return half_width_; }
  Box support() const;
  const Expr& expr() const { return expr_; }
  double integral() const { return integral_; }
  double operator()(const Vector& x) const;

  std::string label() const;

 private:
  Vector center_, half_width_;
  double scale_ = 1.0;
  double integral_ = 0.0;
  Expr expr_;
};

/// `count` bumps of the given half-width spread evenly over the interior of a box.
std::vector<TestFunction> bump_row(const Box& domain, int count, double half_width, bool normalize = true);

/// Finite stand-in for C^infinity(Y): scalar functions of y1..ys.
struct TestFamily {
  std::string name;
  int ambient_dim = 1;
  std::vector<Expr> functions;
  std::vector<std::string> labels;

  /// y^1 .. y^d on R.
  static TestFamily monomials(int degree);
  /// cos(k theta), sin(k theta), k = 1..K, as polynomials in (y1, y2) on S^1.
  static TestFamily trig(int max_k);
  /// y1 .. ys.
  static TestFamily coordinates(int s);
  /// Given expressions in y1..ys.
  static TestFamily custom(int s, const std::vector<std::string>& sources);
};

enum class PairingStatus { Converged, ConvergedUnordered, Divergent, UnderResolved };

std::string to_string(PairingStatus s);

struct PairingOptions {
  EpsGrid grid;
  int nodes_per_wavelength = 20;
  int base_nodes = 1024;                // per axis, without a scale hint
  long max_nodes_per_axis = 1L << 20;
  long max_total_nodes = 1L << 22;
  double refine_tol = 1e-9;             // agreement of successive refinements (relative to |phi|_1)
  int tail = 6;                         // grid points inspected for convergence
  double abs_tol = 1e-6;                // Cauchy tolerance of the tail
  double zero_tol = 1e-4;               // |limit| below this counts as 0 in association tests
  std::optional<Expr> scale;            // overrides the nets' own scale hints
};

/// "strict" tightens the tolerances by a factor 100, "default" keeps them.
PairingOptions tolerance_profile(const std::string& name);

struct Pairing {
  double value = 0.0;
  long nodes = 0;  // per axis
  bool under_resolved = false;
};

/// <f o u_eps, phi> by tensor Gauss-Legendre quadrature over supp phi.
Pairing pair(const EpsNet& net, const Expr& f, const TestFunction& phi, double eps,
             const PairingOptions& opts = {});

/// Same for a whole family; u_eps is evaluated once per node.
std::vector<Pairing> pair_family(const EpsNet& net, const std::vector<Expr>& fs, const TestFunction& phi,
                                 double eps, const PairingOptions& opts = {});

struct PairingSeries {
  Vector eps;
  Vector values;
  std::vector<bool> under_resolved;
  double limit = 0.0;
  double error = 0.0;  // size of the extrapolation correction or the last tail step
  double rate = 0.0;   // fitted algebraic rate of the tail steps, 0 when not fitted
  PairingStatus status = PairingStatus::Divergent;

  bool converged() const {
    return status == PairingStatus::Converged || status == PairingStatus::ConvergedUnordered;
  }
};

/// Classifies a sampled series and extrapolates its limit.
PairingSeries analyze_series(const Vector& eps, const Vector& values, std::vector<bool> under_resolved,
                             const PairingOptions& opts = {});

/// pair_family over the grid, one series per function.
std::vector<PairingSeries> pairing_series(const EpsNet& net, const std::vector<Expr>& fs, const TestFunction& phi,
                                          const PairingOptions& opts = {});

nlohmann::json to_json(const PairingSeries& s);

struct BoundCheck {
  bool bounded = true;
  double early = 0.0;  // max |u_eps| over the first half of the grid
  double late = 0.0;   // same over the second half
};

/// Images of the compact set stay in a fixed ball along the grid.
BoundCheck check_c_bounded(const EpsNet& net, const Box& K, const EpsGrid& grid, int samples = 65);

struct PairingEntry {
  std::string f;
  std::string phi;
  PairingSeries series;
};

struct MembershipReport {
  std::string family;
  BoundCheck bound;
  std::vector<PairingEntry> entries;
  bool member = false;
  bool inconclusive = false;  // under-resolved pairings and no divergent one
};

MembershipReport membership_test_A(const EpsNet& net, const TestFamily& F, const std::vector<TestFunction>& phis,
                                   const PairingOptions& opts = {});

nlohmann::json to_json(const MembershipReport& r);

struct AssocVerdict {
  std::string family;
  bool associated = false;
  bool inconclusive = false;
  std::vector<PairingEntry> entries;  // series of <f o u - f o v, phi>
  std::optional<std::size_t> witness;  // first failing entry
};

/// f o u_eps - f o v_eps -> 0 in D' for every f in F, tested against every phi.
AssocVerdict model_assoc_test(const EpsNet& u, const EpsNet& v, const TestFamily& F,
                              const std::vector<TestFunction>& phis, const PairingOptions& opts = {});

nlohmann::json to_json(const AssocVerdict& v);

enum class YoungCoordinate { Component, Angle };

struct YoungOptions {
  YoungCoordinate coordinate = YoungCoordinate::Component;
  int component = 0;
  double lo = -1.0, hi = 1.0;  // bin range; Angle uses [0, 2 pi)
  PairingOptions pairing;
};

struct YoungMeasureEstimate {
  Box window;
  Vector edges;    // bins + 1 entries
  Vector mass;     // phi-weighted mass per bin
  Vector density;  // mass / bin width / total phi mass
  double phi_integral = 0.0;
  double outside = 0.0;  // mass whose value fell outside the bin range
  long nodes = 0;
  bool under_resolved = false;

  /// sum_k f(center_k) mass_k / phi_integral
  double expectation(const std::function<double(double)>& f) const;
};

/// Histogram of u_eps over `window`, weighted by phi (constant 1 when absent).
YoungMeasureEstimate young_estimate(const EpsNet& net, const Box& window, const std::optional<Expr>& phi,
                                    double eps, int bins, const YoungOptions& opts = {});

nlohmann::json to_json(const YoungMeasureEstimate& y);

struct SampledFunctional {
  std::vector<Vector> centers;
  Vector values;            // extrapolated <f o u_eps, phi_c>, phi_c normalised
  std::vector<PairingStatus> status;
  double sup_f_on_image = 0.0;  // sup |f| over the bounding box of the images
  bool within_bound = true;     // sup |values| <= sup_f_on_image (L-infinity witness)
};

/// Local averages of the weak limit of f o u_eps at bumps of half-width w
/// centred on an n-per-axis grid of K.
SampledFunctional limit_functional(const EpsNet& net, const Expr& f, const Box& K, int n, double half_width,
                                   const PairingOptions& opts = {});

nlohmann::json to_json(const SampledFunctional& s);

}  // namespace cgf
