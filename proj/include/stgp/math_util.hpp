#pragma once

#include <cmath>
#include <cstdint>

namespace stgp {

// log(k!) as an exact running sum of logs; k is at most the number of test
// events so O(k) is fine.
inline double log_factorial(std::int64_t k) {
  double acc = 0.0;
  for (std::int64_t i = 2; i <= k; ++i) acc += std::log(static_cast<double>(i));
  return acc;
}

inline double softplus(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

inline double softplus_inverse(double y) {
  return y > 30.0 ? y : std::log(std::expm1(y));
}

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace stgp
