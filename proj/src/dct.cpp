#include "pidd/dct.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace pidd {

namespace {

std::vector<double> dct_axis(std::size_t k, std::size_t n) {
  const double a = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = a * std::cos(std::numbers::pi * (2.0 * i + 1.0) * k / (2.0 * n));
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> dct2_basis(std::size_t u, std::size_t v, std::size_t h, std::size_t w) {
  if (h == 0 || w == 0 || u >= h || v >= w) {
    throw InvalidInput("DCT frequency (" + std::to_string(u) + "," + std::to_string(v) +
                       ") out of range for " + std::to_string(h) + "x" + std::to_string(w));
  }
  const auto row = dct_axis(u, h);
  const auto col = dct_axis(v, w);
  Tensor<T> out(1, 1, h, w);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) out.at(0, 0, i, j) = static_cast<T>(row[i] * col[j]);
  return out;
}

template Tensor<double> dct2_basis<double>(std::size_t, std::size_t, std::size_t, std::size_t);
template Tensor<float> dct2_basis<float>(std::size_t, std::size_t, std::size_t, std::size_t);

}  // namespace pidd
