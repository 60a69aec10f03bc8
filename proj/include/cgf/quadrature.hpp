#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace cgf {

/// Nodes and weights of an n-point Gauss-Legendre rule on [-1, 1].
template <typename Scalar = double>
struct GaussLegendre {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> nodes;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> weights;

  explicit GaussLegendre(int n) : nodes(n), weights(n) {
    if (n < 1) throw std::invalid_argument("Gauss-Legendre rule needs n >= 1");
    const Scalar pi = std::numbers::pi_v<Scalar>;
    for (int i = 0; i < (n + 1) / 2; ++i) {
      // Newton on P_n starting from the Tricomi estimate.
      Scalar x = std::cos(pi * (i + Scalar(0.75)) / (n + Scalar(0.5)));
      Scalar dp = 0;
      for (int it = 0; it < 100; ++it) {
        Scalar p0 = 1, p1 = x;
        for (int k = 2; k <= n; ++k) {
          const Scalar p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        if (n == 1) p0 = 1;
        dp = n * (x * p1 - p0) / (x * x - 1);
        const Scalar dx = p1 / dp;
        x -= dx;
        if (std::abs(dx) < 4 * std::numeric_limits<Scalar>::epsilon()) break;
      }
      Scalar p0 = 1, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const Scalar p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n == 1 ? Scalar(1) : n * (x * p1 - p0) / (x * x - 1);
      const Scalar w = 2 / ((1 - x * x) * dp * dp);
      nodes(i) = -x;
      nodes(n - 1 - i) = x;
      weights(i) = w;
      weights(n - 1 - i) = w;
    }
    if (n % 2 == 1) nodes(n / 2) = 0;
  }
};

/// Composite Gauss-Legendre rule: `panels` equal panels on [a, b], each with
/// `order` nodes. Nodes are returned in increasing order.
template <typename Scalar = double>
struct CompositeRule {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> nodes;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> weights;

  CompositeRule(Scalar a, Scalar b, int panels, int order) {
    const GaussLegendre<Scalar> gl(order);
    nodes.resize(static_cast<Eigen::Index>(panels) * order);
    weights.resize(nodes.size());
    const Scalar h = (b - a) / panels;
    for (int p = 0; p < panels; ++p) {
      const Scalar mid = a + (p + Scalar(0.5)) * h;
      for (int i = 0; i < order; ++i) {
        nodes(p * order + i) = mid + Scalar(0.5) * h * gl.nodes(i);
        weights(p * order + i) = Scalar(0.5) * h * gl.weights(i);
      }
    }
  }
};

/// Integrates f over [a, b] with a composite Gauss-Legendre rule.
template <typename Scalar, typename Func>
Scalar integrate(const Func& f, Scalar a, Scalar b, int panels = 8, int order = 16) {
  const CompositeRule<Scalar> rule(a, b, panels, order);
  Scalar sum = 0;
  for (Eigen::Index i = 0; i < rule.nodes.size(); ++i) sum += rule.weights(i) * f(rule.nodes(i));
  return sum;
}

}  // namespace cgf
