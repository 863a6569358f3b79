#include "stgp/rng.hpp"

#include <algorithm>
#include <numeric>

namespace stgp {

namespace {

// Inversion for mean small enough that exp(-mean) does not underflow.
std::uint64_t poisson_inversion(Rng& rng, double mean) {
  const double threshold = std::exp(-mean);
  std::uint64_t k = 0;
  double p = rng.uniform();
  while (p > threshold) {
    ++k;
    p *= rng.uniform();
  }
  return k;
}

}  // namespace

std::uint64_t Rng::poisson(double mean) {
  std::uint64_t total = 0;
  while (mean > 300.0) {
    total += poisson_inversion(*this, 300.0);
    mean -= 300.0;
  }
  if (mean > 0.0) total += poisson_inversion(*this, mean);
  return total;
}

std::vector<std::size_t> Rng::sample_without_replacement(std::size_t n, std::size_t k) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k && i + 1 < n; ++i) {
    std::size_t j = i + static_cast<std::size_t>(below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(std::min(k, n));
  return idx;
}

}  // namespace stgp
