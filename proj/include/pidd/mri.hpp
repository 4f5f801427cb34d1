#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pidd/complex_image.hpp"
#include "pidd/rng.hpp"

namespace pidd {

enum class MaskKind { gaussian2d, gaussian1d, poisson2d };

std::string to_string(MaskKind kind);
MaskKind parse_mask_kind(const std::string& s);

/// Binary k-space sampling pattern in the centered layout; 1 = acquired.
class SamplingMask {
 public:
  SamplingMask() = default;
  SamplingMask(std::size_t height, std::size_t width, std::uint8_t fill = 0);

  std::size_t height() const noexcept { return h_; }
  std::size_t width() const noexcept { return w_; }
  std::size_t size() const noexcept { return bits_.size(); }

  std::uint8_t& operator()(std::size_t i, std::size_t j) noexcept { return bits_[i * w_ + j]; }
  std::uint8_t operator()(std::size_t i, std::size_t j) const noexcept { return bits_[i * w_ + j]; }
  std::uint8_t operator[](std::size_t k) const noexcept { return bits_[k]; }
  const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }

  std::size_t count() const noexcept;
  double fraction() const noexcept;
  SamplingMask complement() const;

  MaskKind kind = MaskKind::gaussian2d;
  double target_fraction = 1.0;
  std::uint64_t seed = 0;
  std::size_t acs_radius = 0;

 private:
  std::size_t h_ = 0;
  std::size_t w_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Radius of the always-acquired calibration disc: ceil(0.04 * min(H, W)).
std::size_t acs_radius_for(std::size_t h, std::size_t w);

/// Variable-density mask with exactly round(fraction * H * W) samples
/// (gaussian1d: round(fraction * W) whole columns). The calibration disc is
/// always acquired. Deterministic given the stream.
SamplingMask make_mask(MaskKind kind, double fraction, std::size_t h, std::size_t w, RngStream& rng);

/// Writes the mask as an f32 PIDT file plus `<path>.meta` with
/// kind=, fraction=, seed=, acs_radius= lines.
void save_mask(const std::filesystem::path& path, const SamplingMask& mask);
SamplingMask load_mask(const std::filesystem::path& path);

/// Per coil: M . F(C^q . x).
MultiCoilKSpace forward_encode(const ComplexImage& x, const SensitivityMaps& maps, const SamplingMask& mask);
/// sum_q conj(C^q) . F^-1(M . y^q), the exact adjoint of forward_encode.
ComplexImage adjoint_encode(const MultiCoilKSpace& y, const SensitivityMaps& maps, const SamplingMask& mask);
/// Sensitivity-weighted zero-filled image x_u.
ComplexImage zero_filled(const MultiCoilKSpace& y, const SensitivityMaps& maps, const SamplingMask& mask);

/// Zeroes x wherever every coil map vanishes. E is blind there, so the
/// reconstruction is defined as zero outside the coil support.
ComplexImage restrict_to_support(ComplexImage x, const SensitivityMaps& maps);

/// C^q . x for every coil.
CoilImages coil_images(const ComplexImage& x, const SensitivityMaps& maps);
/// sum_q conj(C^q) . x_q
ComplexImage combine_coils(const CoilImages& images, const SensitivityMaps& maps);
/// Fully sampled k-space of every coil image: F(x_q).
MultiCoilKSpace coil_kspace(const CoilImages& images);

/// Adds circularly-symmetric complex Gaussian noise on acquired samples with
/// power N = nl / (1 - nl) * S, S being the mean |y|^2 over acquired samples.
MultiCoilKSpace inject_noise(const MultiCoilKSpace& y, const SamplingMask& mask, double noise_level, RngStream& rng);

/// Empirical N / (N + S) of `noisy` relative to the clean data on acquired samples.
double measured_noise_level(const MultiCoilKSpace& clean, const MultiCoilKSpace& noisy, const SamplingMask& mask);

struct TvOptions {
  double lambda = 1e-3;
  std::size_t iters = 100;
  /// Non-positive selects 1 / L with L = 1 + 8 lambda / eps.
  double step = 0.0;
  double eps = 1e-3;
};

struct TvResult {
  ComplexImage image;
  /// Objective at the start point followed by one value per iteration.
  std::vector<double> objective;
};

/// Gradient descent on 0.5 ||y - E x||^2 + lambda * TV_eps(x), Huber-smoothed
/// isotropic TV with forward differences, started from the zero-filled image.
TvResult tv_reconstruct(const MultiCoilKSpace& y, const SensitivityMaps& maps, const SamplingMask& mask,
                        const TvOptions& opts);

double tv_objective(const ComplexImage& x, const MultiCoilKSpace& y, const SensitivityMaps& maps,
                    const SamplingMask& mask, double lambda, double eps);

}  // namespace pidd
