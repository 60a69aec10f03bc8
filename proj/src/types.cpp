#include "cgf/types.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <thread>

namespace cgf {

Box::Box(Vector lo, Vector hi) : lo_(std::move(lo)), hi_(std::move(hi)) {
  if (lo_.size() != hi_.size() || lo_.size() == 0)
    throw InvalidArgument("box bounds must have equal, nonzero dimension");
}

Box Box::interval(double a, double b) {
  return Box(Vector::Constant(1, a), Vector::Constant(1, b));
}

Box Box::cube(int dim, double a, double b) {
  return Box(Vector::Constant(dim, a), Vector::Constant(dim, b));
}

bool Box::contains(const Vector& x, double tol) const {
  return ((x - lo_).array() >= -tol).all() && ((hi_ - x).array() >= -tol).all();
}

bool Box::contains(const Box& other, double tol) const {
  return contains(other.lo_, tol) && contains(other.hi_, tol);
}

bool Box::contains_interior(const Box& other) const {
  return (other.lo_.array() > lo_.array()).all() && (other.hi_.array() < hi_.array()).all();
}

Box Box::shrunk(double margin) const {
  return Box(lo_.array() + margin, hi_.array() - margin);
}

Box Box::scaled(double factor) const {
  const Vector c = center();
  const Vector h = 0.5 * factor * extent();
  return Box(c - h, c + h);
}

Box Box::intersect(const Box& other) const {
  return Box(lo_.cwiseMax(other.lo_), hi_.cwiseMin(other.hi_));
}

bool Box::empty() const { return (lo_.array() > hi_.array()).any(); }

Matrix Box::grid(int n) const {
  const int m = dim();
  if (n < 1) throw InvalidArgument("grid needs at least one point per axis");
  long total = 1;
  for (int i = 0; i < m; ++i) total *= n;
  Matrix pts(m, total);
  for (long c = 0; c < total; ++c) {
    long rem = c;
    for (int i = m - 1; i >= 0; --i) {
      const long k = rem % n;
      rem /= n;
      const double t = n == 1 ? 0.5 : static_cast<double>(k) / (n - 1);
      pts(i, c) = lo_(i) + t * (hi_(i) - lo_(i));
    }
  }
  return pts;
}

Vector Box::clamp(const Vector& x) const { return x.cwiseMax(lo_).cwiseMin(hi_); }

double EpsGrid::operator[](int j) const { return eps0 * std::pow(ratio, j); }

Vector EpsGrid::values() const {
  Vector v(size());
  for (int j = 0; j < size(); ++j) v(j) = (*this)[j];
  return v;
}

void EpsGrid::validate() const {
  if (!(eps0 > 0.0 && eps0 <= 1.0)) throw InvalidArgument("eps grid: eps0 must lie in (0,1]");
  if (!(ratio > 0.0 && ratio < 1.0)) throw InvalidArgument("eps grid: ratio must lie in (0,1)");
  if (steps < 1) throw InvalidArgument("eps grid: need at least two points");
}

int thread_count() {
  if (const char* env = std::getenv("CGF_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(thread_count(), n);
  if (workers <= 1 || n < 64) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto work = [&] {
    while (!failed.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace cgf
