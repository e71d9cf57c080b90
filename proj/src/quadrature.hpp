#pragma once

#include <algorithm>
#include <array>
#include <cmath>

namespace masec::detail {

inline constexpr std::array<double, 4> kGaussNodes = {
    0.1834346424956498, 0.5255324099163290, 0.7966664774136267, 0.9602898564975363};
inline constexpr std::array<double, 4> kGaussWeights = {
    0.3626837833783620, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763};

/// 8-point Gauss-Legendre on [lo, hi].
template <typename F>
double gauss8(F&& f, double lo, double hi) {
  const double mid = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  double sum = 0.0;
  for (std::size_t i = 0; i < kGaussNodes.size(); ++i) {
    const double dx = half * kGaussNodes[i];
    sum += kGaussWeights[i] * (f(mid - dx) + f(mid + dx));
  }
  return sum * half;
}

/// Composite 8-point Gauss-Legendre with panels no wider than max_width.
template <typename F>
double gauss8_composite(F&& f, double lo, double hi, double max_width) {
  const int panels = std::max(1, static_cast<int>(std::ceil((hi - lo) / max_width)));
  const double w = (hi - lo) / panels;
  double sum = 0.0;
  for (int p = 0; p < panels; ++p) sum += gauss8(f, lo + p * w, lo + (p + 1) * w);
  return sum;
}

}  // namespace masec::detail
