#pragma once

// Numerical asymptotics of nets as eps -> 0: moderateness, negligibility and
// equivalence verdicts from log-log fits of sup-norms along an EpsGrid.
//
// Verdicts are desk-scale: "negligible" means the decay rate exceeds q_max
// (or the decay is visibly faster than any power) on the tested grid, never a
// proof for all q.

#include "cgf/net.hpp"

#include <json.hpp>

#include <map>
#include <string>
#include <vector>

namespace cgf {

enum class Classification { Moderate, NegligibleToOrder, Negligible, Divergent, Inconclusive };

std::string to_string(Classification c);

struct AsymptoticOptions {
  EpsGrid grid;
  int samples = 64;                  // sup-norm sample points per axis
  int tail = 8;                      // points used for the slope fit
  double residual_threshold = 0.25;  // RMS, log10 units
  double drift_threshold = 0.5;      // slope change between the two tail windows
  double slope_tolerance = 0.05;     // rounding allowance when turning slopes into orders
  double zero_floor = 1e-13;         // sup-norms at or below this count as zero
  int q_max = 6;
  bool recheck_density = true;       // repeat with doubled sampling density
  NormKind norm = NormKind::Euclidean;
};

/// Least-squares fit of log10(sup) against log10(eps) over the grid tail.
struct SeriesFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual = 0.0;
  double early_slope = 0.0;
  double late_slope = 0.0;
  int points = 0;
  bool exact_zero = false;     // every value at or below the floor
  bool reached_floor = false;  // values dropped to the floor after being positive
  bool overflow = false;       // a value is +inf
  bool super_growth = false;   // decreasing slope across windows, or overflow
  bool super_decay = false;    // increasing slope across windows, or floor hit
};

SeriesFit fit_series(const Vector& eps, const Vector& sup, const AsymptoticOptions& opts);

struct AsymptoticVerdict {
  Classification classification = Classification::Inconclusive;
  double slope = 0.0;
  double intercept = 0.0;
  double residual = 0.0;
  /// N for moderate verdicts, q* for negligibility verdicts.
  int order = 0;
  std::map<int, double> per_order;
  bool exact_zero = false;
  bool reached_floor = false;
  bool super_polynomial = false;
  Vector eps;
  std::vector<Vector> series;  // one sup-norm series per tested order
  std::string note;

  bool moderate() const { return classification == Classification::Moderate; }
  /// Desk-scale negligibility; equivalence verdicts use this.
  bool negligible() const { return classification == Classification::Negligible; }
};

/// O(eps^-N) test on all partials of order <= k_max.
AsymptoticVerdict classify_moderate(const EpsNet& net, const Box& K, int k_max,
                                    const AsymptoticOptions& opts = {});

/// O(eps^q) test of the values (order 0 only).
AsymptoticVerdict classify_negligible(const EpsNet& net, const Box& K,
                                      const AsymptoticOptions& opts = {});

/// classify_negligible of the component-wise difference.
AsymptoticVerdict equiv_test(const EpsNet& u, const EpsNet& v, const Box& K,
                             const AsymptoticOptions& opts = {});

/// Negligibility verdict for an already sampled series of sup-distances.
AsymptoticVerdict classify_negligible_series(const Vector& eps, const Vector& sup,
                                             const AsymptoticOptions& opts = {});

nlohmann::json to_json(const AsymptoticVerdict& v);

}  // namespace cgf
