#pragma once

#include "pidd/tensor.hpp"

namespace pidd {

/// Sobel gradient magnitude per plane, replicate padding:
///   Gx = [[-1,0,1],[-2,0,2],[-1,0,1]] (cross-correlation), Gy = Gx^T,
///   out = sqrt(Gx^2 + Gy^2).
/// The backward pass divides by sqrt(Gx^2 + Gy^2 + 1e-12) so flat pixels get
/// a zero (not undefined) gradient.
template <typename T>
Tensor<T> sobel(const Tensor<T>& img);

/// Vector-Jacobian product of `sobel` at `img`.
template <typename T>
Tensor<T> sobel_backward(const Tensor<T>& img, const Tensor<T>& grad_out);

/// |re + i im| of an N x 2 x H x W tensor, as N x 1 x H x W.
template <typename T>
Tensor<T> magnitude(const Tensor<T>& two_channel);

template <typename T>
Tensor<T> magnitude_backward(const Tensor<T>& two_channel, const Tensor<T>& grad_out);

inline constexpr double kSqrtGuard = 1e-12;

}  // namespace pidd
