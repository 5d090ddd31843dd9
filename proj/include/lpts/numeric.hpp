#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "lpts/types.hpp"

namespace lpts {

/// |x|^p, fast-pathed for the exponents that dominate the workload.
inline double pow_abs(double x, double p) {
  const double a = std::abs(x);
  if (p == 1.0) return a;
  if (p == 2.0) return a * a;
  if (p == 1.5) return a * std::sqrt(a);
  return std::pow(a, p);
}

/// sum_c |v_c|^p with compensated (Kahan) summation.
template <typename Derived>
double lp_pow_norm(const Eigen::MatrixBase<Derived>& v, double p) {
  double sum = 0.0;
  double comp = 0.0;
  for (Eigen::Index c = 0; c < v.size(); ++c) {
    const double term = pow_abs(static_cast<double>(v(c)), p) - comp;
    const double next = sum + term;
    comp = (next - sum) - term;
    sum = next;
  }
  return sum;
}

/// sum_c |a_c - b_c|^p, compensated.
template <typename DerivedA, typename DerivedB>
double lp_pow_dist(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b,
                   double p) {
  double sum = 0.0;
  double comp = 0.0;
  for (Eigen::Index c = 0; c < a.size(); ++c) {
    const double term = pow_abs(static_cast<double>(a(c)) - static_cast<double>(b(c)), p) - comp;
    const double next = sum + term;
    comp = (next - sum) - term;
    sum = next;
  }
  return sum;
}

/// 1-based order-statistic rank of the q-percentile over s values: ceil(q*s).
inline std::size_t percentile_rank(double q, std::size_t s) {
  if (s == 0) throw std::invalid_argument("percentile of empty set");
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(s)));
  return std::clamp<std::size_t>(rank, 1, s);
}

/// Value at rank ceil(q*s), ascending. Mutates the scratch vector.
inline double percentile(std::vector<double>& values, double q) {
  const std::size_t rank = percentile_rank(q, values.size());
  auto nth = values.begin() + static_cast<std::ptrdiff_t>(rank - 1);
  std::nth_element(values.begin(), nth, values.end());
  return *nth;
}

/// Lower median: value at rank ceil(s/2). Mutates the scratch vector.
inline double lower_median(std::vector<double>& values) { return percentile(values, 0.5); }

}  // namespace lpts
