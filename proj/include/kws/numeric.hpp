#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

namespace kws {

template <class S>
constexpr S neg_inf() {
  return -std::numeric_limits<S>::infinity();
}

// log(exp(a) + exp(b)) without overflow. Tolerates -inf in either argument
// and never produces NaN from them.
template <class S>
inline S log_sum_exp(S a, S b) {
  if (a < b) std::swap(a, b);
  if (std::isinf(a) && a < S(0)) return a;  // both -inf
  return a + std::log1p(std::exp(b - a));
}

template <class S>
inline S log_sum_exp(S a, S b, S c) {
  return log_sum_exp(log_sum_exp(a, b), c);
}

template <class S>
inline S log_sum_exp(const S* vals, long n) {
  S m = neg_inf<S>();
  for (long i = 0; i < n; ++i) m = std::max(m, vals[i]);
  if (std::isinf(m) && m < S(0)) return m;
  S sum = S(0);
  for (long i = 0; i < n; ++i) sum += std::exp(vals[i] - m);
  return m + std::log(sum);
}

}  // namespace kws
