#pragma once

// Target manifolds embedded in R^s, their nearest-point retractions, and
// certificates for nets that take values in them.

#include "cgf/asymptotics.hpp"
#include "cgf/net.hpp"

#include <json.hpp>

#include <memory>
#include <optional>
#include <vector>

namespace cgf {

enum class ManifoldKind { Sphere, Torus, Implicit };

/// Point too far from the manifold for the retraction.
class OutsideTube : public Error {
 public:
  OutsideTube(const std::string& what, Vector point, double distance)
      : Error(what), point_(std::move(point)), distance_(distance) {}
  const Vector& point() const { return point_; }
  double distance() const { return distance_; }

 private:
  Vector point_;
  double distance_;
};

class NewtonFailure : public Error {
 public:
  using Error::Error;
};

/// Net values leave the manifold.
class OffManifold : public Error {
 public:
  OffManifold(const std::string& what, Vector x, double eps, double residual)
      : Error(what), x_(std::move(x)), eps_(eps), residual_(residual) {}
  const Vector& x() const { return x_; }
  double eps() const { return eps_; }
  double residual() const { return residual_; }

 private:
  Vector x_;
  double eps_;
  double residual_;
};

/// Net images are not contained in a fixed compact set.
class CBoundViolation : public Error {
 public:
  using Error::Error;
};

/// Y = g^{-1}(0) in R^s.
///
/// Spheres and tori (products of unit circles, one per pair of ambient
/// coordinates) use closed-form projections; implicit manifolds use a
/// Newton solve of the nearest-point KKT system.
class EmbeddedManifold {
 public:
  /// Unit sphere S^n in R^{n+1}.
  static EmbeddedManifold sphere(int n, double tau = 0.9);
  /// (S^1)^k in R^{2k}.
  static EmbeddedManifold torus(int k, double tau = 0.9);
  /// Zero set of expressions in y1..ys with full-rank Jacobian on Y.
  static EmbeddedManifold implicit(int ambient_dim, std::vector<Expr> g, double tau);

  ManifoldKind kind() const { return kind_; }
  int ambient_dim() const { return ambient_; }
  int intrinsic_dim() const { return ambient_ - static_cast<int>(g_.size()); }
  double tau() const { return tau_; }
  /// Radius of the closed tube on which the extended retraction equals r.
  double inner_tau() const { return 0.5 * tau_; }
  const std::vector<Expr>& constraints() const { return g_; }

  Vector constraint(const Vector& p) const;
  Matrix constraint_jacobian(const Vector& p) const;

  /// Euclidean distance to Y. Exact for spheres and tori; for implicit
  /// manifolds the distance to the Newton projection, or the guard estimate
  /// 2|g|/sigma_min when the projection is refused.
  double distance(const Vector& p) const;

  /// Nearest point of Y. Throws OutsideTube near the cut locus (closed
  /// forms) or beyond the tube radius (implicit).
  Vector retract(const Vector& p) const;

  /// r on the tube of radius tau/2, identity beyond tau, smooth in between.
  Vector extend_retraction(const Vector& p) const;

  /// Intrinsic (great-circle / flat-torus) distance between points of Y;
  /// empty for implicit manifolds.
  std::optional<double> riemannian_distance(const Vector& p, const Vector& q) const;

  /// Point of Y from angle coordinates (spheres: polar angles, tori: one
  /// angle per factor). Throws for implicit manifolds.
  Vector parametrize(const Vector& angles) const;
  int parameter_dim() const;

  nlohmann::json to_json() const;
  static EmbeddedManifold from_json(const nlohmann::json& j);

 private:
  Vector newton_project(const Vector& p) const;
  double guard_estimate(const Vector& p) const;

  ManifoldKind kind_ = ManifoldKind::Sphere;
  int ambient_ = 2;
  double tau_ = 0.9;
  std::vector<Expr> g_;
  std::vector<Program> g_prog_;
  std::vector<std::vector<Program>> jac_prog_;               // [i][a] = dg_i/dy_a
  std::vector<std::vector<std::vector<Program>>> hess_prog_;  // [i][a][b]
};

struct ImageBound {
  Box K;
  Box image;            // bounding box of u_eps(K) over the grid tail
  Vector extent_growth;  // per-eps max |coordinate| of the image
  bool stable = true;
};

/// An EpsNet certified to take values in a manifold.
struct ManifoldNet {
  EpsNet net;
  std::shared_ptr<const EmbeddedManifold> manifold;
  double residual = 0.0;  // max |g(u_eps(x))| over the test grid
  std::vector<ImageBound> bounds;
  bool c_bounded = true;
};

struct CertifyOptions {
  EpsGrid grid;
  int samples = 33;   // per axis
  double tol = 1e-8;  // on-manifold tolerance
  int tail = 8;
};

/// Checks u_eps(X) in Y on domain x grid, and c-boundedness on each K.
/// Throws OffManifold or CBoundViolation.
ManifoldNet certify_manifold_net(const EpsNet& net, std::shared_ptr<const EmbeddedManifold> M,
                                 const std::vector<Box>& Ks, const CertifyOptions& opts = {});

struct ManifoldEquivVerdict {
  bool equivalent = false;
  bool distance_to_zero = false;  // sup ambient distance tends to 0
  Vector eps;
  Vector sup_distance;
  std::optional<Vector> sup_riemannian;
  std::optional<bool> riemannian_agrees;
  AsymptoticVerdict ambient;  // negligibility of coordinate differences
};

/// Sup of the ambient distance along the grid and coordinate-wise
/// negligibility of u - v on K.
ManifoldEquivVerdict manifold_equiv_test(const ManifoldNet& u, const ManifoldNet& v, const Box& K,
                                         const AsymptoticOptions& opts = {});

nlohmann::json to_json(const ManifoldEquivVerdict& v);

}  // namespace cgf
