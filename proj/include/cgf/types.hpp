#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cgf {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input violates a documented precondition (bad shapes, empty boxes, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Closed axis-aligned box [lo_1, hi_1] x ... x [lo_m, hi_m].
///
/// Used both for compact sets K inside a chart and, read as its interior,
/// for the open sets of a cover.
class Box {
 public:
  Box() = default;
  Box(Vector lo, Vector hi);

  static Box interval(double a, double b);
  static Box cube(int dim, double a, double b);

  int dim() const { return static_cast<int>(lo_.size()); }
  const Vector& lo() const { return lo_; }
  const Vector& hi() const { return hi_; }
  Vector center() const { return 0.5 * (lo_ + hi_); }
  Vector extent() const { return hi_ - lo_; }

  bool contains(const Vector& x, double tol = 0.0) const;
  bool contains(const Box& other, double tol = 0.0) const;
  /// True when `other` lies in the interior of this box.
  bool contains_interior(const Box& other) const;

  /// Box moved inwards by `margin` on every side (outwards when negative).
  Box shrunk(double margin) const;
  /// Box shrunk towards its center by the given fraction of each half-width.
  Box scaled(double factor) const;
  /// Intersection; empty (lo > hi on some axis) when disjoint.
  Box intersect(const Box& other) const;
  bool empty() const;

  /// Columns are the points of a tensor grid with `n` points per axis,
  /// endpoints included.
  Matrix grid(int n) const;

  /// Nearest point of the box.
  Vector clamp(const Vector& x) const;

 private:
  Vector lo_;
  Vector hi_;
};

/// Geometric sequence eps_j = eps0 * ratio^j, j = 0..steps.
struct EpsGrid {
  double eps0 = 0.5;
  double ratio = 0.5;
  int steps = 14;

  int size() const { return steps + 1; }
  double operator[](int j) const;
  Vector values() const;
  void validate() const;
};

/// Number of worker threads, read from CGF_THREADS (default: hardware).
int thread_count();

/// Runs fn(i) for i in [0, n). Each index is visited exactly once; callers
/// write into per-index slots so reductions stay deterministic.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace cgf
