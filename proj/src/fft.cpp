#include "pidd/fft.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>

namespace pidd {

namespace {

// FFTW planning is not thread-safe; executing a finished plan is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

template <typename T>
struct Fftw;

template <>
struct Fftw<double> {
  using complex_t = fftw_complex;
  using plan_t = fftw_plan;
  static complex_t* alloc(std::size_t n) { return fftw_alloc_complex(n); }
  static void free(void* p) { fftw_free(p); }
  static plan_t plan(int h, int w, complex_t* in, complex_t* out, int sign) {
    return fftw_plan_dft_2d(h, w, in, out, sign, FFTW_ESTIMATE);
  }
  static void execute(plan_t p, complex_t* in, complex_t* out) { fftw_execute_dft(p, in, out); }
};

template <>
struct Fftw<float> {
  using complex_t = fftwf_complex;
  using plan_t = fftwf_plan;
  static complex_t* alloc(std::size_t n) { return fftwf_alloc_complex(n); }
  static void free(void* p) { fftwf_free(p); }
  static plan_t plan(int h, int w, complex_t* in, complex_t* out, int sign) {
    return fftwf_plan_dft_2d(h, w, in, out, sign, FFTW_ESTIMATE);
  }
  static void execute(plan_t p, complex_t* in, complex_t* out) { fftwf_execute_dft(p, in, out); }
};


template <typename T>
typename Fftw<T>::plan_t cached_plan(std::size_t h, std::size_t w, int sign) {
  using F = Fftw<T>;
  static std::map<std::tuple<std::size_t, std::size_t, int>, typename F::plan_t> cache;
  std::lock_guard lock(planner_mutex());
  const auto key = std::make_tuple(h, w, sign);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  auto* in = F::alloc(h * w);
  auto* out = F::alloc(h * w);
  auto p = F::plan(static_cast<int>(h), static_cast<int>(w), in, out, sign);
  F::free(in);
  F::free(out);
  if (!p) throw Error("FFTW failed to create a plan");
  cache.emplace(key, p);
  return p;
}

template <typename T>
void centered_transform(std::span<std::complex<T>> plane, std::size_t h, std::size_t w, int sign) {
  using F = Fftw<T>;
  if (h < 8 || w < 8) throw InvalidInput("FFT requires at least 8x8");
  if (plane.size() != h * w) throw InvalidInput("FFT plane length does not match dims");
  for (const auto& v : plane) {
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
      throw InvalidInput("FFT input contains non-finite values");
    }
  }
  auto plan = cached_plan<T>(h, w, sign);

  const std::size_t n = h * w;
  std::unique_ptr<typename F::complex_t[], void (*)(void*)> in(F::alloc(n), F::free);
  std::unique_ptr<typename F::complex_t[], void (*)(void*)> out(F::alloc(n), F::free);

  // ifftshift into the work buffer
  const std::size_t sh = h / 2, sw = w / 2;
  for (std::size_t i = 0; i < h; ++i) {
    const std::size_t si = (i + sh) % h;
    for (std::size_t j = 0; j < w; ++j) {
      const auto& v = plane[si * w + (j + sw) % w];
      in[i * w + j][0] = v.real();
      in[i * w + j][1] = v.imag();
    }
  }
  F::execute(plan, in.get(), out.get());

  // fftshift back with orthonormal scaling
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(n)));
  const std::size_t bh = h - sh, bw = w - sw;
  for (std::size_t i = 0; i < h; ++i) {
    const std::size_t si = (i + bh) % h;
    for (std::size_t j = 0; j < w; ++j) {
      const auto& v = out[si * w + (j + bw) % w];
      plane[i * w + j] = std::complex<T>(v[0] * scale, v[1] * scale);
    }
  }
}

}  // namespace

template <typename T>
ComplexImageT<T> fft2_centered(const ComplexImageT<T>& img) {
  ComplexImageT<T> out = img;
  centered_transform<T>(out.data(), out.height(), out.width(), FFTW_FORWARD);
  return out;
}

template <typename T>
ComplexImageT<T> ifft2_centered(const ComplexImageT<T>& ksp) {
  ComplexImageT<T> out = ksp;
  centered_transform<T>(out.data(), out.height(), out.width(), FFTW_BACKWARD);
  return out;
}

template ComplexImageT<double> fft2_centered(const ComplexImageT<double>&);
template ComplexImageT<float> fft2_centered(const ComplexImageT<float>&);
template ComplexImageT<double> ifft2_centered(const ComplexImageT<double>&);
template ComplexImageT<float> ifft2_centered(const ComplexImageT<float>&);

void fft2_centered_inplace(std::span<std::complex<double>> plane, std::size_t h, std::size_t w) {
  centered_transform<double>(plane, h, w, FFTW_FORWARD);
}

void ifft2_centered_inplace(std::span<std::complex<double>> plane, std::size_t h, std::size_t w) {
  centered_transform<double>(plane, h, w, FFTW_BACKWARD);
}

}  // namespace pidd
