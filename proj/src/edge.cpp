#include "pidd/edge.hpp"

#include <cmath>

namespace pidd {

namespace {

constexpr int kGx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};

inline std::size_t clampi(long v, std::size_t n) {
  return v < 0 ? 0 : (static_cast<std::size_t>(v) >= n ? n - 1 : static_cast<std::size_t>(v));
}

template <typename T>
void gradients(const T* x, std::size_t h, std::size_t w, std::vector<T>& gx, std::vector<T>& gy) {
  gx.assign(h * w, T(0));
  gy.assign(h * w, T(0));
  for (std::size_t i = 0; i < h; ++i) {
    const T* up = x + clampi(static_cast<long>(i) - 1, h) * w;
    const T* mid = x + i * w;
    const T* down = x + clampi(static_cast<long>(i) + 1, h) * w;
    for (std::size_t j = 0; j < w; ++j) {
      const std::size_t l = clampi(static_cast<long>(j) - 1, w), r = clampi(static_cast<long>(j) + 1, w);
      // differences first, so flat neighborhoods give exact zeros
      gx[i * w + j] = (up[r] - up[l]) + T(2) * (mid[r] - mid[l]) + (down[r] - down[l]);
      gy[i * w + j] = (down[l] - up[l]) + T(2) * (down[j] - up[j]) + (down[r] - up[r]);
    }
  }
}

template <typename T>
void require_sobel_dims(const Tensor<T>& img) {
  if (img.h() < 3 || img.w() < 3) throw InvalidInput("sobel requires at least 3x3 input, got " + img.shape().str());
}

}  // namespace

template <typename T>
Tensor<T> sobel(const Tensor<T>& img) {
  require_sobel_dims(img);
  Tensor<T> out(img.shape());
  std::vector<T> gx, gy;
  const std::size_t h = img.h(), w = img.w();
  for (std::size_t n = 0; n < img.n(); ++n)
    for (std::size_t c = 0; c < img.c(); ++c) {
      gradients(img.plane(n, c), h, w, gx, gy);
      T* o = out.plane(n, c);
      for (std::size_t p = 0; p < h * w; ++p) o[p] = std::sqrt(gx[p] * gx[p] + gy[p] * gy[p]);
    }
  return out;
}

template <typename T>
Tensor<T> sobel_backward(const Tensor<T>& img, const Tensor<T>& grad_out) {
  require_sobel_dims(img);
  img.require_same(grad_out, "sobel_backward");
  Tensor<T> dx(img.shape());
  std::vector<T> gx, gy;
  const std::size_t h = img.h(), w = img.w();
  for (std::size_t n = 0; n < img.n(); ++n)
    for (std::size_t c = 0; c < img.c(); ++c) {
      gradients(img.plane(n, c), h, w, gx, gy);
      const T* go = grad_out.plane(n, c);
      T* d = dx.plane(n, c);
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          const std::size_t p = i * w + j;
          const T inv = go[p] / std::sqrt(gx[p] * gx[p] + gy[p] * gy[p] + static_cast<T>(kSqrtGuard));
          const T ux = gx[p] * inv, uy = gy[p] * inv;
          if (ux == T(0) && uy == T(0)) continue;
          // scatter the adjoint of both correlations through the clamped taps
          for (int a = -1; a <= 1; ++a)
            for (int b = -1; b <= 1; ++b) {
              const std::size_t q = clampi(static_cast<long>(i) + a, h) * w + clampi(static_cast<long>(j) + b, w);
              d[q] += static_cast<T>(kGx[a + 1][b + 1]) * ux + static_cast<T>(kGx[b + 1][a + 1]) * uy;
            }
        }
    }
  return dx;
}

template <typename T>
Tensor<T> magnitude(const Tensor<T>& x) {
  if (x.c() != 2) throw InvalidInput("magnitude expects 2 channels, got " + x.shape().str());
  Tensor<T> out(x.n(), 1, x.h(), x.w());
  const std::size_t hw = x.h() * x.w();
  for (std::size_t n = 0; n < x.n(); ++n) {
    const T* re = x.plane(n, 0);
    const T* im = x.plane(n, 1);
    T* o = out.plane(n, 0);
    for (std::size_t p = 0; p < hw; ++p) o[p] = std::sqrt(re[p] * re[p] + im[p] * im[p]);
  }
  return out;
}

template <typename T>
Tensor<T> magnitude_backward(const Tensor<T>& x, const Tensor<T>& grad_out) {
  if (x.c() != 2 || grad_out.c() != 1 || grad_out.n() != x.n() || grad_out.h() != x.h() || grad_out.w() != x.w()) {
    throw InvalidInput("magnitude_backward shape mismatch");
  }
  Tensor<T> dx(x.shape());
  const std::size_t hw = x.h() * x.w();
  for (std::size_t n = 0; n < x.n(); ++n) {
    const T* re = x.plane(n, 0);
    const T* im = x.plane(n, 1);
    const T* g = grad_out.plane(n, 0);
    T* dre = dx.plane(n, 0);
    T* dim = dx.plane(n, 1);
    for (std::size_t p = 0; p < hw; ++p) {
      const T inv = g[p] / std::sqrt(re[p] * re[p] + im[p] * im[p] + static_cast<T>(kSqrtGuard));
      dre[p] = re[p] * inv;
      dim[p] = im[p] * inv;
    }
  }
  return dx;
}

template Tensor<float> sobel(const Tensor<float>&);
template Tensor<double> sobel(const Tensor<double>&);
template Tensor<float> sobel_backward(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> sobel_backward(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> magnitude(const Tensor<float>&);
template Tensor<double> magnitude(const Tensor<double>&);
template Tensor<float> magnitude_backward(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> magnitude_backward(const Tensor<double>&, const Tensor<double>&);

}  // namespace pidd
