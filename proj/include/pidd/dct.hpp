#pragma once

#include <cstddef>

#include "pidd/tensor.hpp"

namespace pidd {

/// Orthonormal 2D DCT-II basis image B_{u,v} as a 1x1xHxW tensor:
///   B(i,j) = a(u) a(v) cos(pi (2i+1) u / 2h) cos(pi (2j+1) v / 2w)
/// with a(0) = sqrt(1/h), a(k>0) = sqrt(2/h) (and likewise along w).
template <typename T = double>
Tensor<T> dct2_basis(std::size_t u, std::size_t v, std::size_t h, std::size_t w);

}  // namespace pidd
