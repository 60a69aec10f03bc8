#include "cgf/asymptotics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cgf {

std::string to_string(Classification c) {
  switch (c) {
    case Classification::Moderate: return "moderate";
    case Classification::NegligibleToOrder: return "negligible_to_order";
    case Classification::Negligible: return "negligible";
    case Classification::Divergent: return "divergent";
    case Classification::Inconclusive: return "inconclusive";
  }
  return "?";
}

namespace {

struct Line {
  double slope, intercept, residual;
};

Line least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = static_cast<Eigen::Index>(x.size());
  Matrix A(n, 2);
  Vector b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    A(i, 0) = x[i];
    A(i, 1) = 1.0;
    b(i) = y[i];
  }
  const Vector coef = A.colPivHouseholderQr().solve(b);
  const double rms = std::sqrt((A * coef - b).squaredNorm() / static_cast<double>(n));
  return {coef(0), coef(1), rms};
}

}  // namespace

SeriesFit fit_series(const Vector& eps, const Vector& sup, const AsymptoticOptions& opts) {
  SeriesFit fit;
  std::vector<double> lx, ly;
  bool seen_positive = false;
  for (Eigen::Index j = 0; j < sup.size(); ++j) {
    const double s = sup(j);
    if (std::isnan(s)) throw Error("sup-norm series contains NaN");
    if (std::isinf(s)) {
      fit.overflow = true;
      continue;
    }
    if (s <= opts.zero_floor) {
      if (seen_positive) fit.reached_floor = true;
      continue;
    }
    seen_positive = true;
    lx.push_back(std::log10(eps(j)));
    ly.push_back(std::log10(s));
  }
  if (lx.empty() && !fit.overflow) {
    fit.exact_zero = true;
    return fit;
  }
  if (lx.size() > static_cast<std::size_t>(opts.tail)) {
    lx.erase(lx.begin(), lx.end() - opts.tail);
    ly.erase(ly.begin(), ly.end() - opts.tail);
  }
  fit.points = static_cast<int>(lx.size());
  fit.super_growth = fit.overflow;
  if (lx.size() < 2) {
    fit.super_decay = fit.reached_floor;
    return fit;
  }
  const Line all = least_squares(lx, ly);
  fit.slope = all.slope;
  fit.intercept = all.intercept;
  fit.residual = all.residual;
  if (lx.size() >= 4) {
    const std::size_t half = lx.size() / 2;
    const std::vector<double> ex(lx.end() - 2 * half, lx.end() - half), ey(ly.end() - 2 * half, ly.end() - half);
    const std::vector<double> lx2(lx.end() - half, lx.end()), ly2(ly.end() - half, ly.end());
    fit.early_slope = least_squares(ex, ey).slope;
    fit.late_slope = least_squares(lx2, ly2).slope;
  } else {
    fit.early_slope = fit.late_slope = all.slope;
  }
  const double drift = fit.late_slope - fit.early_slope;
  if (drift < -opts.drift_threshold) fit.super_growth = true;
  if (drift > opts.drift_threshold && fit.late_slope > 0.0) fit.super_decay = true;
  if (fit.reached_floor && fit.late_slope >= opts.q_max) fit.super_decay = true;
  return fit;
}

namespace {

Vector sup_series(const EpsNet& net, const Box& K, int order, const AsymptoticOptions& opts,
                  int samples) {
  const Vector eps = opts.grid.values();
  Vector out(eps.size());
  SupNormOptions so{samples, opts.norm};
  for (Eigen::Index j = 0; j < eps.size(); ++j) out(j) = sup_norm_order(net, eps(j), K, order, so);
  return out;
}

AsymptoticVerdict moderate_once(const EpsNet& net, const Box& K, int k_max,
                                const AsymptoticOptions& opts, int samples) {
  AsymptoticVerdict v;
  v.eps = opts.grid.values();
  bool divergent = false, inconclusive = false, any_fit = false;
  int N = 0;
  double worst = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= k_max; ++k) {
    const Vector s = sup_series(net, K, k, opts, samples);
    v.series.push_back(s);
    const SeriesFit fit = fit_series(v.eps, s, opts);
    if (fit.exact_zero) {
      v.per_order[k] = 0.0;
      continue;
    }
    v.per_order[k] = fit.slope;
    if (fit.points >= 2 && fit.slope < worst) {
      worst = fit.slope;
      v.intercept = fit.intercept;
      v.residual = fit.residual;
      any_fit = true;
    }
    if (fit.super_growth) {
      divergent = true;
      v.super_polynomial = true;
      continue;
    }
    if (fit.super_decay || fit.reached_floor) {
      v.reached_floor = v.reached_floor || fit.reached_floor;
      continue;
    }
    if (fit.residual > opts.residual_threshold) {
      inconclusive = true;
      continue;
    }
    N = std::max(N, static_cast<int>(std::ceil(-fit.slope - opts.slope_tolerance)));
  }
  v.slope = any_fit ? worst : 0.0;
  v.exact_zero = !any_fit && !divergent;
  if (divergent) {
    v.classification = Classification::Divergent;
  } else if (inconclusive) {
    v.classification = Classification::Inconclusive;
    v.note = "residual above fit-quality threshold";
  } else {
    v.classification = Classification::Moderate;
    v.order = std::max(0, N);
  }
  return v;
}

AsymptoticVerdict negligible_from_fit(const Vector& eps, const Vector& s, const AsymptoticOptions& opts) {
  AsymptoticVerdict v;
  v.eps = eps;
  v.series.push_back(s);
  const SeriesFit fit = fit_series(eps, s, opts);
  v.slope = fit.slope;
  v.intercept = fit.intercept;
  v.residual = fit.residual;
  v.per_order[0] = fit.slope;
  v.reached_floor = fit.reached_floor;
  if (fit.exact_zero) {
    v.exact_zero = true;
    v.classification = Classification::Negligible;
    v.order = opts.q_max;
    v.note = "exact zero on the sample grid";
    return v;
  }
  if (fit.super_growth) {
    v.super_polynomial = true;
    v.classification = Classification::Divergent;
    return v;
  }
  if (fit.super_decay) {
    v.super_polynomial = true;
    v.classification = Classification::Negligible;
    v.order = std::max(opts.q_max, static_cast<int>(std::floor(fit.slope + opts.slope_tolerance)));
    v.note = "decay faster than any tested power";
    return v;
  }
  if (fit.residual > opts.residual_threshold) {
    v.classification = Classification::Inconclusive;
    v.note = "residual above fit-quality threshold";
    return v;
  }
  v.order = static_cast<int>(std::floor(fit.slope + opts.slope_tolerance));
  v.classification =
      v.order >= opts.q_max ? Classification::Negligible : Classification::NegligibleToOrder;
  return v;
}

bool same_verdict(const AsymptoticVerdict& a, const AsymptoticVerdict& b) {
  if (a.classification != b.classification) return false;
  if (a.classification == Classification::Moderate || a.classification == Classification::NegligibleToOrder)
    return a.order == b.order;
  return true;
}

template <typename F>
AsymptoticVerdict with_density_check(const AsymptoticOptions& opts, F&& run) {
  AsymptoticVerdict v = run(opts.samples);
  if (!opts.recheck_density || v.exact_zero) return v;
  const AsymptoticVerdict fine = run(2 * opts.samples - 1);
  if (!same_verdict(v, fine)) {
    v.note = "verdict changed under doubled sampling density (" + to_string(fine.classification) + ")";
    v.classification = Classification::Inconclusive;
  }
  return v;
}

}  // namespace

AsymptoticVerdict classify_moderate(const EpsNet& net, const Box& K, int k_max,
                                    const AsymptoticOptions& opts) {
  opts.grid.validate();
  if (k_max < 0) throw InvalidArgument("k_max must be non-negative");
  return with_density_check(opts, [&](int samples) { return moderate_once(net, K, k_max, opts, samples); });
}

AsymptoticVerdict classify_negligible(const EpsNet& net, const Box& K, const AsymptoticOptions& opts) {
  opts.grid.validate();
  return with_density_check(opts, [&](int samples) {
    return negligible_from_fit(opts.grid.values(), sup_series(net, K, 0, opts, samples), opts);
  });
}

AsymptoticVerdict classify_negligible_series(const Vector& eps, const Vector& sup,
                                             const AsymptoticOptions& opts) {
  return negligible_from_fit(eps, sup, opts);
}

AsymptoticVerdict equiv_test(const EpsNet& u, const EpsNet& v, const Box& K,
                             const AsymptoticOptions& opts) {
  return classify_negligible(u - v, K, opts);
}

nlohmann::json to_json(const AsymptoticVerdict& v) {
  auto num = [](double x) -> nlohmann::json {
    if (std::isfinite(x)) return x;
    return nullptr;
  };
  nlohmann::json per_order = nlohmann::json::object();
  for (const auto& [k, s] : v.per_order) per_order[std::to_string(k)] = num(s);
  nlohmann::json j{
      {"slope", num(v.slope)},
      {"intercept", num(v.intercept)},
      {"residual", num(v.residual)},
      {"classification", to_string(v.classification)},
      {"order", v.order},
      {"per_order", per_order},
  };
  if (v.exact_zero) j["exact_zero"] = true;
  if (v.reached_floor) j["reached_floor"] = true;
  if (v.super_polynomial) j["super_polynomial"] = true;
  if (!v.note.empty()) j["note"] = v.note;
  return j;
}

}  // namespace cgf
