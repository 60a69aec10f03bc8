#pragma once

// Embeddings of continuous and circle/torus-valued maps as manifold-valued
// nets, and the probe that detects when no tubular retraction can work.

#include "cgf/mollify.hpp"
#include "cgf/sheaf.hpp"

#include <json.hpp>

#include <memory>

namespace cgf {

/// The mollified map cannot be brought into the inner tube for any tested eps.
class TubularObstruction : public Error {
 public:
  using Error::Error;
};

struct EmbedOptions {
  EpsGrid grid;
  int samples = 65;  // per axis, for containment checks
  ConvolutionOptions conv;
  double certify_tol = 1e-10;
};

struct ContinuousEmbedding {
  ManifoldNet net;          // x -> r((u * rho_mu)(x)) with mu = mu(eps, x)
  EpsNet smoothed;          // (u * rho_eps)_eps, before retraction
  GluingSchedule schedule;  // thresholds found along the grid
};

/// Embeds u: box -> Y. Each K_l gets the largest grid eps_l below which
/// u * rho_eps maps K_l into the inner tube; defaults to the single
/// compact set K_1 = domain of u.
ContinuousEmbedding embed_continuous_map(const SampledMap& u, std::shared_ptr<const EmbeddedManifold> M,
                                         const Mollifier& rho, std::vector<Box> exhaustion = {},
                                         const EmbedOptions& opts = {});

/// sigma(u): the eps-independent net u (smooth data only).
EpsNet sigma(const SampledMap& u);

struct ProbeReport {
  Vector eps;
  Vector max_distance;           // per eps, max over x of dist(u * rho_eps(x), Y)
  std::vector<Vector> witness;   // x attaining it
  /// No tube of radius below this contains u * rho_eps(K) for any tested eps.
  double containment_bound = 0.0;
  /// containment_bound >= tau: the retraction construction cannot apply.
  bool obstructed = false;
};

/// Samples u * rho_eps on an odd per-axis grid (so the box centre is hit).
ProbeReport tubular_failure_probe(const SampledMap& u, const EmbeddedManifold& M, const Mollifier& rho,
                                  const EpsGrid& grid = {}, int samples = 401, const ConvolutionOptions& conv = {});

nlohmann::json to_json(const ProbeReport& r);

/// (cos, sin) of u_hat * rho_eps. Lift values must lie in [0, 2 pi);
/// jumps across the cut are mollified as they are.
ManifoldNet embed_circle_valued(const SampledMap& lift, const Mollifier& rho, const EmbedOptions& opts = {});

/// Per-factor circle embedding into (S^1)^n in R^{2n}; lift has n components.
ManifoldNet embed_torus_valued(const SampledMap& lift, const Mollifier& rho, const EmbedOptions& opts = {});

}  // namespace cgf
