#pragma once

// Fibre-linear maps of trivial bundles X x R^m' -> Y x R^n' given by a base
// net and a matrix net: (x, xi) -> (u_eps(x), A_eps(x) xi).

#include "cgf/dprime.hpp"
#include "cgf/manifold.hpp"
#include "cgf/mapsembed.hpp"
#include "cgf/sheaf.hpp"

#include <json.hpp>

#include <memory>
#include <optional>

namespace cgf {

class VBNet {
 public:
  /// `fiber` has rows * cols components, stored row-major.
  VBNet(EpsNet base, EpsNet fiber, int rows, int cols, std::shared_ptr<const EmbeddedManifold> manifold = nullptr);

  const EpsNet& base() const { return base_; }
  const EpsNet& fiber() const { return fiber_; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  const std::shared_ptr<const EmbeddedManifold>& manifold() const { return manifold_; }

  Matrix fiber_at(const Vector& x, double eps) const;
  /// Local form of the map.
  std::pair<Vector, Vector> operator()(const Vector& x, const Vector& xi, double eps) const;

  /// Fibre entry (i, j) as an expression, when the fibre is symbolic.
  const Expr& entry(int i, int j) const;

 private:
  EpsNet base_, fiber_;
  int rows_, cols_;
  std::shared_ptr<const EmbeddedManifold> manifold_;
};

/// Base and fibre nets as expressions; rows of `fiber` must have equal length.
VBNet parse_vbnet(const Box& domain, const std::vector<std::string>& base,
                  const std::vector<std::vector<std::string>>& fiber,
                  std::shared_ptr<const EmbeddedManifold> manifold = nullptr);

/// Tangent map: base = net, fibre = Jacobian of the symbolic components.
/// The Jacobian is spot-checked against central differences.
VBNet tangent(const EpsNet& net, std::shared_ptr<const EmbeddedManifold> manifold = nullptr);

/// Largest relative gap between the fibre and central differences of the
/// base at `points` seeded random points of the domain.
double tangent_fd_gap(const VBNet& v, double eps, int points = 16, unsigned seed = 7);

struct VBVerdict {
  AsymptoticVerdict base;
  AsymptoticVerdict fiber;
  std::optional<ManifoldEquivVerdict> manifold;  // base test on Y, when both declare one
  bool holds = false;
};

/// Moderateness of the base and of every fibre entry (entry-wise max norm).
VBVerdict vb_moderate(const VBNet& v, const Box& K, int k_max = 0, const AsymptoticOptions& opts = {});

/// Base equivalence (on the manifold when declared) and negligible fibre
/// difference at derivative order 0.
VBVerdict vb_equiv(const VBNet& u, const VBNet& v, const Box& K, const AsymptoticOptions& opts = {});

nlohmann::json to_json(const VBVerdict& v);

/// (x, xi) -> (Psi u + c, Psi A Phi^-1): constant linear changes of fibre
/// coordinates (Phi on the source, Psi on the target), with the target chart
/// affine so that the base transforms consistently.
VBNet transform(const VBNet& v, const Matrix& phi, const Matrix& psi, const Vector& shift);

struct VBEmbedOptions {
  EmbedOptions embed;
  std::vector<Box> exhaustion;  // for a continuous base into a manifold
};

/// Embeds a continuous vb-homomorphism: smooth bases are taken as they are,
/// continuous ones go through the manifold embedding (or plain mollification
/// when no manifold is given); fibre entries are mollified component-wise.
/// Rough (merely bounded) fibres are accepted only over a smooth base.
VBNet embed_vb_continuous(const SampledMap& base, const SampledMap& fiber, int rows, int cols, const Mollifier& rho,
                          std::shared_ptr<const EmbeddedManifold> manifold = nullptr,
                          const VBEmbedOptions& opts = {});

struct ModelVBVerdict {
  bool equivalent = false;
  bool inconclusive = false;
  AssocVerdict base;   // f o u - f o v
  AssocVerdict fiber;  // grad f(u) A - grad f(v) B, entry-wise
};

/// f o u_eps - f o v_eps -> 0 and D(f o u_eps) - D(f o v_eps) -> 0 in D'
/// for every f in F, the latter via the fibres.
ModelVBVerdict model_vb_equiv(const VBNet& u, const VBNet& v, const TestFamily& F,
                              const std::vector<TestFunction>& phis, const PairingOptions& opts = {});

nlohmann::json to_json(const ModelVBVerdict& v);

struct VBPatch {
  Box U;
  VBNet net;
};

struct VBGlueResult {
  GlueResult base;
  VBNet net;
};

/// Glues the bases on Y and the fibres by the chi-weighted sum at the same
/// reparametrised eps.
VBGlueResult glue_vb(const std::vector<VBPatch>& family, const OpenCover& cover, const PartitionOfUnity& pou,
                     const GluingSchedule& schedule, const GlueOptions& opts = {});

}  // namespace cgf
