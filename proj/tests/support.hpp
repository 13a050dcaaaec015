#pragma once

#include <cmath>
#include <functional>
#include <random>

#include "sgn/numerics.hpp"

namespace sgn::test {

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c,
                            double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = n(rng);
  return m;
}

inline Matrix random_uniform(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double lo,
                             double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = u(rng);
  return m;
}

// Central differences of a scalar function of x, entry by entry.
inline Matrix central_difference(const std::function<double(const Matrix&)>& f, Matrix x,
                                 double eps = 1e-5) {
  Matrix g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double saved = x(i);
    x(i) = saved + eps;
    const double up = f(x);
    x(i) = saved - eps;
    const double down = f(x);
    x(i) = saved;
    g(i) = (up - down) / (2.0 * eps);
  }
  return g;
}

inline double max_rel_err(const Matrix& a, const Matrix& b, double floor = 1e-8) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double d = std::max({std::abs(a(i)), std::abs(b(i)), floor});
    worst = std::max(worst, std::abs(a(i) - b(i)) / d);
  }
  return worst;
}

}  // namespace sgn::test
