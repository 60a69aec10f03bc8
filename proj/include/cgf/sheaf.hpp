#pragma once

// Covers, partitions of unity, the eta/nu/mu reparametrisation, and gluing
// of coherent families of manifold-valued nets.

#include "cgf/manifold.hpp"

#include <json.hpp>

#include <vector>

namespace cgf {

/// Finite family of open boxes (read as interiors) covering a compact box X0.
struct OpenCover {
  Box X0;
  std::vector<Box> sets;

  int dim() const { return X0.dim(); }
  /// Pairs (a, b), a < b, whose sets intersect.
  std::vector<std::pair<int, int>> overlaps() const;
  void validate() const;
};

class NotACover : public Error {
 public:
  NotACover(const std::string& what, Vector witness) : Error(what), witness_(std::move(witness)) {}
  const Vector& witness() const { return witness_; }

 private:
  Vector witness_;
};

struct PartitionOfUnity {
  std::vector<Expr> bumps;  // psi_a, supported inside U_a
  Expr denominator;         // sum of psi_a
  std::vector<Expr> chi;    // psi_a / denominator

  std::size_t size() const { return chi.size(); }
  /// chi_a(x) for every a.
  Vector operator()(const Vector& x) const;

 private:
  friend PartitionOfUnity build_partition(const OpenCover& cover, int check_samples);
  std::vector<Program> psi_prog_;
};

/// C-infinity bump equal to 1 on the middle of U and supported in U shrunk
/// by 2% of each side length.
Expr box_bump(const Box& U);

/// Products of 1-D transition bumps normalised by their sum. Throws
/// NotACover when the sum drops below 1e-9 on the X0 check grid
/// (1024 points in 1-D, 64 per axis otherwise unless given).
PartitionOfUnity build_partition(const OpenCover& cover, int check_samples = 0);

/// The (K_l, eps_l, eta, nu, mu) data of the gluing construction.
class GluingSchedule {
 public:
  const std::vector<Box>& exhaustion() const { return exhaustion_; }
  const std::vector<double>& thresholds() const { return thresholds_; }
  int dim() const { return exhaustion_.front().dim(); }

  /// eta in x1..xm; 0 < eta <= eps_l on K_l minus the interior of K_{l-1}.
  const Expr& eta_expr() const { return eta_; }
  /// mu = eta * nu(eps / eta) in x1..xm, eps.
  const Expr& mu_expr() const { return mu_; }

  double eta(const Vector& x) const;
  double mu(double eps, const Vector& x) const;

  nlohmann::json to_json() const;

 private:
  friend GluingSchedule build_schedule(std::vector<Box> exhaustion, std::vector<double> thresholds);
  std::vector<Box> exhaustion_;
  std::vector<double> thresholds_;
  Expr eta_, mu_;
  Program eta_prog_;
};

/// Throws InvalidArgument for non-nested boxes or non-positive /
/// increasing thresholds.
GluingSchedule build_schedule(std::vector<Box> exhaustion, std::vector<double> thresholds);

/// eps -> mu(eps, x): symbolic substitution for symbolic nets, composed
/// evaluation otherwise.
EpsNet reparametrize(const EpsNet& net, const GluingSchedule& schedule);

struct Patch {
  Box U;
  ManifoldNet net;  // defined on (a box containing) U
};

struct PairCoherence {
  int a = 0, b = 0;
  Box overlap;  // compact part of U_a and U_b inside X0
  ManifoldEquivVerdict verdict;
  bool coherent = false;
};

struct CoherenceReport {
  std::vector<PairCoherence> pairs;
  bool coherent = true;
};

CoherenceReport check_coherence(const std::vector<Patch>& family, const OpenCover& cover,
                                const AsymptoticOptions& opts = {});

nlohmann::json to_json(const CoherenceReport& r);

/// Combination left the inner tube below threshold.
class GluingFailure : public Error {
 public:
  GluingFailure(const std::string& what, Vector x, double eps) : Error(what), x_(std::move(x)), eps_(eps) {}
  const Vector& x() const { return x_; }
  double eps() const { return eps_; }

 private:
  Vector x_;
  double eps_;
};

struct GlueOptions {
  EpsGrid grid;
  int samples = 65;            // per axis, for threshold and tube checks
  int max_halvings = 20;
  bool check_coherence = true;
  AsymptoticOptions equiv;     // used by the coherence check
};

struct GlueResult {
  ManifoldNet net;
  GluingSchedule schedule;  // after threshold tightening
  double delta = 0.0;       // tau' / 2
  int halvings = 0;
  CoherenceReport coherence;
};

/// u_eps(x) = r~( sum_a chi_a(x) u^a_{mu(eps,x)}(x) ).
GlueResult glue(const std::vector<Patch>& family, const OpenCover& cover, const PartitionOfUnity& pou,
                const GluingSchedule& schedule, const GlueOptions& opts = {});

/// manifold_equiv_test of the glued net against each patch on U_b shrunk
/// into X0.
std::vector<ManifoldEquivVerdict> verify_restrictions(const ManifoldNet& glued, const std::vector<Patch>& family,
                                                      const OpenCover& cover, const AsymptoticOptions& opts = {});

/// Compact box inside U and X0 used for restriction checks.
Box compact_part(const Box& U, const Box& X0);

}  // namespace cgf
