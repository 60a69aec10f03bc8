#pragma once

// Compactly supported mollifiers with vanishing moments, sampled input maps,
// and the convolution embedding u -> (u * rho_eps)_eps.

#include "cgf/expr.hpp"
#include "cgf/net.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace cgf {

/// rho(y) = p(|y|^2 / R^2) * exp(-1 / (1 - |y|^2 / R^2)) on |y| < R, zero
/// outside. The polynomial p has degree floor(M/2) and is chosen so that
/// int rho = 1 and every moment of order 1..M vanishes.
struct Mollifier {
  int dim = 1;
  int moments = 0;
  double radius = 1.0;
  Vector coefficients;  // p(t) = sum_k coefficients(k) t^k

  double operator()(const Vector& y) const;
  /// rho as an expression in y1..ym.
  Expr expression() const;
};

Mollifier build_mollifier(int dim, int moments, double radius = 1.0);

nlohmann::json to_json(const Mollifier& rho);
Mollifier mollifier_from_json(const nlohmann::json& j);

enum class Regularity { Smooth, Continuous, Bounded };

std::string to_string(Regularity r);
Regularity regularity_from_string(const std::string& s);

/// Input data u on a box: either values on a uniform grid (multilinear
/// interpolation) or data expressions in x1..xm, which may use abs/sgn.
/// Outside the box, values are those of the nearest point of the box.
class SampledMap {
 public:
  /// `values` is point-major in C order over the axes, components fastest.
  static SampledMap from_grid(Box domain, std::vector<int> shape, int target_dim,
                              std::vector<double> values, Regularity regularity);
  static SampledMap from_exprs(Box domain, std::vector<Expr> components, Regularity regularity);
  /// Parses data expressions (abs and sgn allowed).
  static SampledMap parse(Box domain, const std::vector<std::string>& components,
                          Regularity regularity);
  /// Samples a map on a grid.
  static SampledMap tabulate(const SampledMap& source, std::vector<int> shape);

  const Box& domain() const { return domain_; }
  int dim() const { return domain_.dim(); }
  int target_dim() const { return target_dim_; }
  Regularity regularity() const { return regularity_; }
  bool analytic() const { return !exprs_.empty(); }
  const std::vector<Expr>& expressions() const { return exprs_; }
  const std::vector<int>& shape() const { return shape_; }
  const std::vector<double>& values() const { return values_; }
  /// Smallest grid spacing; 0 for analytic data.
  double spacing() const;

  Vector operator()(const Vector& x) const;

  /// Writes values as raw little-endian float64 and returns the JSON header.
  nlohmann::json save(const std::filesystem::path& bin_file) const;
  /// Reads a map from a header; relative file names resolve against `base`.
  static SampledMap load(const nlohmann::json& header, const std::filesystem::path& base);

 private:
  Box domain_;
  int target_dim_ = 1;
  Regularity regularity_ = Regularity::Continuous;
  std::vector<Expr> exprs_;
  std::vector<Program> programs_;
  std::vector<int> shape_;
  std::vector<double> values_;
};

struct ConvolutionOptions {
  int order = 0;       // Gauss-Legendre nodes per axis; 0 picks by dimension and derivative order
  int panels = 1;      // panels per axis on [-R, R]
  int max_panels = 0;  // refinement cap per axis; 0 selects a dimension-based default
};

/// Tensor Gauss-Legendre quadrature of rho (and its derivatives) on
/// [-R, R]^m. Node sets are cached per panel count and multi-index.
class Convolver {
 public:
  Convolver(Mollifier rho, ConvolutionOptions opts = {});

  const Mollifier& mollifier() const { return rho_; }

  /// (f * rho_eps)(x), component-wise.
  Vector convolve(const SampledMap& f, double eps, const Vector& x) const;
  /// D^alpha (f * rho_eps)(x) = eps^-|alpha| int f(x - eps y) D^alpha rho(y) dy.
  Vector convolve_derivative(const SampledMap& f, double eps, const Vector& x,
                             const MultiIndex& alpha) const;
  /// Panel count used at this eps for this input.
  int panels_for(const SampledMap& f, double eps) const;
  /// Nodes per axis for a derivative of total order k.
  int nodes_per_axis(int k) const;

 private:
  struct Nodes {
    Matrix points;   // m x n
    Vector weights;  // quadrature weight times D^alpha rho
  };
  const Nodes& nodes(int panels, const MultiIndex& alpha) const;

  Mollifier rho_;
  ConvolutionOptions opts_;
  Expr rho_expr_;
  mutable std::mutex mutex_;
  mutable std::map<std::pair<int, MultiIndex>, std::unique_ptr<Nodes>> cache_;
};

/// Vector convolve(f, rho, eps, x) with a throwaway Convolver.
Vector convolve(const SampledMap& f, const Mollifier& rho, double eps, const Vector& x,
                const ConvolutionOptions& opts = {});

/// The net (u * rho_eps)_eps; derivatives use D rho exactly.
EpsNet embed_scalar(const SampledMap& u, const Mollifier& rho, const ConvolutionOptions& opts = {});
EpsNet embed_scalar(const SampledMap& u, std::shared_ptr<const Convolver> convolver);

}  // namespace cgf
