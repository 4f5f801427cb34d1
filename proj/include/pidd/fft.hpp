#pragma once

#include <complex>
#include <cstddef>
#include <span>

#include "pidd/complex_image.hpp"

namespace pidd {

// Centered, orthonormal 2D DFT: the DC coefficient sits at (H/2, W/2) and
// both directions scale by 1/sqrt(HW), so the transform is unitary.
// Inputs must be finite and at least 8x8.

template <typename T>
ComplexImageT<T> fft2_centered(const ComplexImageT<T>& img);
template <typename T>
ComplexImageT<T> ifft2_centered(const ComplexImageT<T>& ksp);

/// In-place variants on a raw H x W plane. Used by the multi-coil operators.
void fft2_centered_inplace(std::span<std::complex<double>> plane, std::size_t h, std::size_t w);
void ifft2_centered_inplace(std::span<std::complex<double>> plane, std::size_t h, std::size_t w);

}  // namespace pidd
