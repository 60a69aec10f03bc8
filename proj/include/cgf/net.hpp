#pragma once

// Nets (u_eps)_eps of smooth maps from a box in R^m to R^s.

#include "cgf/expr.hpp"
#include "cgf/types.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace cgf {

using MultiIndex = std::vector<int>;

/// Evaluation back end of an EpsNet. Sources without exact derivatives fall
/// back to central differences in `partial`.
class NetSource {
 public:
  virtual ~NetSource() = default;

  virtual int target_dim() const = 0;
  virtual Vector value(const Vector& x, double eps) const = 0;
  virtual Vector partial(const Vector& x, double eps, const MultiIndex& alpha) const;
  /// Component expressions in x1..xm, eps when the net is symbolic.
  virtual const std::vector<Expr>* expressions() const { return nullptr; }
};

/// Central-difference partial derivative of an arbitrary source.
Vector finite_difference_partial(const NetSource& src, const Vector& x, double eps,
                                 const MultiIndex& alpha);

class EpsNet {
 public:
  EpsNet(Box domain, std::shared_ptr<const NetSource> source);

  static EpsNet from_exprs(Box domain, std::vector<Expr> components);
  /// Parses each component over the variables x1..xm, eps.
  static EpsNet parse(Box domain, const std::vector<std::string>& components);
  static EpsNet from_function(Box domain, int target_dim,
                              std::function<Vector(const Vector&, double)> fn);

  const Box& domain() const { return domain_; }
  int dim() const { return domain_.dim(); }
  int target_dim() const { return source_->target_dim(); }

  Vector operator()(const Vector& x, double eps) const { return source_->value(x, eps); }
  Vector partial(const Vector& x, double eps, const MultiIndex& alpha) const;

  bool symbolic() const { return source_->expressions() != nullptr; }
  const std::vector<Expr>& expressions() const;
  const std::shared_ptr<const NetSource>& source() const { return source_; }

  /// Same net on another box.
  EpsNet restricted(const Box& box) const;

  /// Length scale of oscillations as an expression in eps (e.g. "eps" for
  /// sin(x/eps)); used to size quadrature for pairings.
  const std::optional<Expr>& scale_hint() const { return scale_hint_; }
  EpsNet with_scale_hint(Expr scale) const;

 private:
  Box domain_;
  std::shared_ptr<const NetSource> source_;
  std::optional<Expr> scale_hint_;
};

/// Component-wise u - v (symbolic when both are).
EpsNet operator-(const EpsNet& u, const EpsNet& v);
/// Component-wise c * u.
EpsNet operator*(double c, const EpsNet& u);
/// x -> f(u_eps(x)) where f is given by expressions in y1..ys.
EpsNet compose(const std::vector<Expr>& outer, const EpsNet& inner);
/// Stacks the components of nets on a common domain.
EpsNet concat(const std::vector<EpsNet>& parts);

/// All multi-indices of total order exactly `order` in m variables.
std::vector<MultiIndex> multi_indices(int m, int order);

enum class NormKind { Euclidean, MaxAbs };

struct SupNormOptions {
  int samples = 64;  // per axis
  NormKind norm = NormKind::Euclidean;
};

/// max over a uniform sample grid of K of the norm of the vector of all
/// order-`order` partials of all components.
double sup_norm_order(const EpsNet& net, double eps, const Box& K, int order,
                      const SupNormOptions& opts = {});

/// max over orders 0..k of sup_norm_order.
double sup_norm(const EpsNet& net, double eps, const Box& K, int k, const SupNormOptions& opts = {});

}  // namespace cgf
